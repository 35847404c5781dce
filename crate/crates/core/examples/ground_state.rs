//! Ground state of a short chain: energy, charge gap and the midpoint
//! density-wave correlator.
//!
//! cargo run --example ground_state -- [L] [g2] [t]

use cavity_array::dmrg::{dmrg_run, DmrgConfig};
use cavity_array::model::ModelParams;
use cavity_array::observables::{charge_gap, dw_midpoint};

fn main() -> cavity_array::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut next = |default: &str| args.next().unwrap_or_else(|| default.to_string());
    let length: usize = next("20").parse().expect("L is an integer");
    let g2: f64 = next("1.35").parse().expect("g2 is a number");
    let t: f64 = next("0.25").parse().expect("t is a number");

    let params = ModelParams::default().with_length(length).with_g2(g2).with_t(t);
    let config = DmrgConfig::default();
    let run = dmrg_run(&params, length as i32, &config)?;
    println!("E0 = {:.12} ({} sweeps, converged {})", run.energy(), run.sweep_energies.len(), run.converged);
    println!("C_DW(L/2) = {:.6e}", dw_midpoint(&run)?);
    let gap = charge_gap(&params, &config)?;
    println!("charge gap = {:.6e} per site, {:.6e} whole chain", gap.value, gap.total());
    Ok(())
}
