// SPDX-License-Identifier: Apache-2.0

pub mod access;
pub mod bist;
pub mod circuit;
pub mod cli;
pub mod compactor;
pub mod diagnosis;
pub mod faultsim;
pub mod synth;
pub mod tpg;
