//! Backward reachable sets as H-polytopes and the region containment test
//! that decides which actions a region enables.

use imdp_synth::abstraction::{backward_set_single, build_action_set, Layer, Partition};
use imdp_synth::dynamics::LinearSystem;
use imdp_synth::geometry::{rect_inside_polytope, HalfspacePolytope, HyperRectangle};
use imdp_synth::noise::NoiseSource;
use nalgebra::{DMatrix, DVector};

fn main() -> imdp_synth::Result<()> {
    let sys = LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[1.5, 1.0, 0.0, 1.1]),
        DMatrix::from_row_slice(2, 2, &[1.25, 0.5, 1.0, 1.0]),
        HalfspacePolytope::from_box(&HyperRectangle::symmetric(2, 60.0)?),
        NoiseSource::standard_gaussian(2),
    )?;

    // States from which (10, -4) is exactly reachable with u in U.
    let target = DVector::from_vec(vec![10.0, -4.0]);
    let set = backward_set_single(&sys, &target)?;
    println!("backward set of {:?}: {} halfspaces", target.as_slice(), set.num_constraints());
    for x in [[0.0, 0.0], [10.0, -4.0], [40.0, 40.0]] {
        println!("  contains {x:?}: {}", set.contains_point(&x)?);
    }
    let region = HyperRectangle::new(vec![-1.0, -1.0], vec![1.0, 1.0])?;
    println!("  contains region {:?}..{:?}: {}", region.lower(), region.upper(), rect_inside_polytope(&region, &set)?);

    let partition = Partition::new(HyperRectangle::symmetric(2, 41.0)?, vec![41, 41])?;
    let actions = build_action_set(&partition, Layer::Single(&sys))?;
    let center = partition.locate(&[0.0, 0.0]);
    println!(
        "{} regions, {} actions, {} enabled pairs; the center region enables {}",
        partition.num_regions(),
        actions.num_actions(),
        actions.enabled_pairs(),
        actions.enabled[center].len()
    );
    Ok(())
}
