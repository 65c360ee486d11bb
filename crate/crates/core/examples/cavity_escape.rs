//! Escape efficiency of the OPO from finesse and mirror data, compared with
//! the value implied by the heralding efficiency.

use biphoton::cli::{escape_comparison, CavityInputs};
use biphoton::models::{cavity_solve, finesse_from_rho};

fn main() -> biphoton::Result<()> {
    let e = escape_comparison(&CavityInputs::default())?;
    let c = e.cavity;
    println!("round-trip power fraction rho = {:.5}", c.rho);
    println!("internal loss   = {:.2} ± {:.2} %", 100.0 * c.l_int, 100.0 * c.sigma_l_int);
    println!("escape (cavity) = {:.1} ± {:.1} %", 100.0 * c.eta_esc, 100.0 * c.sigma_eta_esc);
    println!("escape (heralding) = {:.1} %", 100.0 * e.from_heralding);
    println!("escape (heralding, noise corrected) = {:.1} %", 100.0 * e.from_heralding_noise_corrected);

    println!("\noutput coupler scan at F = 114:");
    for r_oc in [0.95, 0.96, 0.97, 0.98] {
        match cavity_solve(114.0, 0.9999, r_oc) {
            Ok(s) => println!("  R_oc = {r_oc}: L_int = {:.2} %, eta = {:.1} %", 100.0 * s.l_int, 100.0 * s.eta_esc),
            Err(err) => println!("  R_oc = {r_oc}: {err}"),
        }
    }
    println!("lossless cavity with R_oc = 0.97 would reach F = {:.1}", finesse_from_rho(0.9999f64.powi(3) * 0.97));
    Ok(())
}
