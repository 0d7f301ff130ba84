//! LQR gain from the Riccati equation, its admissibility on the state
//! region, and the effect of multi-step grouping on an under-actuated plant.

use imdp_synth::dynamics::{
    eigenvalues, group_dynamics, make_stabilized, solve_dare, spectral_radius, validate_gain, LinearSystem,
    LqrWeights,
};
use imdp_synth::geometry::{HalfspacePolytope, HyperRectangle};
use imdp_synth::noise::NoiseSource;
use nalgebra::DMatrix;

fn main() -> imdp_synth::Result<()> {
    let scalar = DMatrix::from_element(1, 1, 1.0);
    let (_, k) = solve_dare(&scalar, &scalar, &LqrWeights::new(scalar.clone(), scalar.clone())?)?;
    println!("scalar LQR gain (A = B = Q = R = 1): {:.9}", k[(0, 0)]);

    let sys = LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[1.5, 1.0, 0.0, 1.1]),
        DMatrix::from_row_slice(2, 2, &[1.25, 0.5, 1.0, 1.0]),
        HalfspacePolytope::from_box(&HyperRectangle::symmetric(2, 60.0)?),
        NoiseSource::standard_gaussian(2),
    )?;
    let (_, k) = solve_dare(sys.a(), sys.b(), &LqrWeights::identity(2, 2))?;
    let a_cl = sys.a() - sys.b() * &k;
    println!("integrator gain K = {k:.4}");
    println!("open-loop spectral radius {:.3}, closed loop {:.3}", spectral_radius(sys.a()), spectral_radius(&a_cl));
    for ev in eigenvalues(&a_cl) {
        println!("  closed-loop eigenvalue {:.4} {:+.4}i", ev.re, ev.im);
    }

    let x = HyperRectangle::symmetric(2, 41.0)?;
    match validate_gain(&sys, &k, &x) {
        Ok(()) => println!("-K x stays in U over the whole region"),
        Err(v) => println!("gain rejected: {v}"),
    }
    let big = &k * 3.0;
    if let Err(v) = validate_gain(&sys, &big, &x) {
        println!("3K rejected: {v}");
    }
    let u_prime = HalfspacePolytope::from_box(&HyperRectangle::symmetric(2, 20.0)?);
    let stabilized = make_stabilized(&sys, k, u_prime, &x)?;
    println!("abstraction input set U' has {} halfspaces", stabilized.abstract_input_set().num_constraints());

    // A double integrator with one input needs two steps for a square B.
    let di = LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
        HalfspacePolytope::from_box(&HyperRectangle::symmetric(1, 1.0)?),
        NoiseSource::standard_gaussian(2),
    )?;
    let grouped = group_dynamics(&di, 2)?;
    println!("grouped double integrator: A^2 = {:.1}B_hat = {:.1}", grouped.a(), grouped.b());
    Ok(())
}
