use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spsu_core::model::lipschitz_block;
use spsu_core::{
    extract_patches, initialize, palm_step, project_simplex_columns, spectral_norm,
    synthesize_scene, Block, Constraint, Matrix, ProblemSpec, Ranks, SyntheticSceneSpec, Variant,
    Weights,
};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn scene_problem(variant: Variant) -> ProblemSpec {
    let spec = SyntheticSceneSpec::standard(60, 60, 2, 50, 3, 0.3, 0).unwrap();
    let scene = synthesize_scene(&spec).unwrap();
    let s = extract_patches(&scene.pan, 11).unwrap();
    let y = scene.cube.data;
    let weights = Weights::renormalized(1.0, 1.0, 1.0, 0.1, &y, Some(&s));
    ProblemSpec::new(y, Some(s), Ranks::new(3, 10, 12), weights, variant, Constraint::AbundanceSimplex)
        .unwrap()
}

fn projections(c: &mut Criterion) {
    let x = random_matrix(12, 3600, 1);
    c.bench_function("simplex projection 12x3600", |b| {
        b.iter(|| project_simplex_columns(black_box(&x)))
    });
    let y = random_matrix(121, 3600, 2);
    c.bench_function("spectral norm 121x3600", |b| {
        b.iter(|| spectral_norm(black_box(&y), 1e-9).unwrap())
    });
}

fn palm(c: &mut Criterion) {
    let spec = scene_problem(Variant::Sp2u);
    let st = initialize(&spec, 0).unwrap();
    c.bench_function("sp2u lipschitz U", |b| {
        b.iter(|| lipschitz_block(&spec, black_box(&st), Block::U).unwrap())
    });
    c.bench_function("sp2u full sweep 60x60", |b| {
        b.iter(|| {
            let mut cur = st.clone();
            for &block in Variant::Sp2u.active_blocks() {
                cur = palm_step(&spec, &cur, block, 2.0).unwrap();
            }
            cur
        })
    });
    let nmf = scene_problem(Variant::Nmf);
    let st = initialize(&nmf, 0).unwrap();
    c.bench_function("nmf full sweep 60x60", |b| {
        b.iter(|| {
            let cur = palm_step(&nmf, black_box(&st), Block::M, 2.0).unwrap();
            palm_step(&nmf, &cur, Block::A, 2.0).unwrap()
        })
    });
}

criterion_group!(benches, projections, palm);
criterion_main!(benches);
