//! Element loops on the rayon pool against the same loops pinned to one
//! thread. Built without the `parallel` feature both variants are sequential.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stokes_ocp::benchmarks::{benchmark, Example};
use stokes_ocp::estimators::{estimate_ocp, WeightRho, DEFAULT_GRADING_DEPTH, DEFAULT_LATTICE_ORDER};
use stokes_ocp::mesh::initial_mesh;
use stokes_ocp::ocp::pdas_solve;
use stokes_ocp::spaces::DofMap;
use stokes_ocp::stokes::assemble;

fn element_loops(c: &mut Criterion) {
    let b = benchmark(Example::One, 1.5, None).unwrap();
    let mut mesh = initial_mesh(b.domain);
    for _ in 0..2 {
        mesh = mesh.refine_uniform().unwrap();
    }
    let dofs = DofMap::new(&mesh);
    let sol = pdas_solve(&mesh, &dofs, &b.problem, None).unwrap();
    let weight = WeightRho::new(b.problem.obs_points.clone(), b.problem.alpha, &mesh).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();

    let mut group = c.benchmark_group("element_loops");
    group.sample_size(10);
    for (name, one_thread) in [("parallel", false), ("sequential", true)] {
        let run = |f: &mut (dyn FnMut() + Send)| if one_thread { single.install(f) } else { f() };
        group.bench_function(BenchmarkId::new("assemble", name), |bench| {
            bench.iter(|| {
                let mut out = None;
                run(&mut || out = Some(assemble(&mesh, &dofs)));
                out
            })
        });
        group.bench_function(BenchmarkId::new("estimate", name), |bench| {
            bench.iter(|| {
                let mut out = None;
                run(&mut || {
                    out = Some(estimate_ocp(
                        &mesh,
                        &dofs,
                        &b.problem,
                        &sol,
                        &weight,
                        DEFAULT_GRADING_DEPTH,
                        DEFAULT_LATTICE_ORDER,
                    ))
                });
                out
            })
        });
    }
    group.finish();
}

criterion_group!(benches, element_loops);
criterion_main!(benches);
