use fabseq::config::RunConfig;
use fabseq::constraints::Continuity;
use fabseq::grid::presets::{
    BRACKET_ARM, BRACKET_COLUMN, BRACKET_GUSSET, BRACKET_HOLE_CENTER, BRACKET_HOLE_RADIUS, BRACKET_LUG_RADIUS,
};
use fabseq::grid::{build_preset, NodeSelector, Preset, Side};
use fabseq::io::VoxelField;
use fabseq::measures::{Axis, DistortionMeasure, MeasureTerm};
use fabseq::process::{simulate, stage_order_independence_check};
use fabseq::projection::{binary_layer, binary_stage_densities, stage_densities, ProjectionParams};
use fabseq::timefield::{FieldLayout, FieldMode, TimeField};
use proptest::prelude::*;
use std::path::Path;

fn ray_cast(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn rect(r: [f64; 4]) -> Vec<[f64; 2]> {
    vec![[r[0], r[2]], [r[1], r[2]], [r[1], r[3]], [r[0], r[3]]]
}

fn circle(c: [f64; 2], r: f64) -> Vec<[f64; 2]> {
    (0..720)
        .map(|k| {
            let a = k as f64 * std::f64::consts::PI / 360.0;
            [c[0] + r * a.cos(), c[1] + r * a.sin()]
        })
        .collect()
}

#[test]
fn bracket_matches_polygon_oracle() {
    let g = build_preset(&Preset::Bracket2d, &[144, 96], None).unwrap();
    let solids = [rect(BRACKET_COLUMN), rect(BRACKET_ARM), BRACKET_GUSSET.to_vec(), circle(BRACKET_HOLE_CENTER, BRACKET_LUG_RADIUS)];
    let hole = circle(BRACKET_HOLE_CENTER, BRACKET_HOLE_RADIUS);
    let mut compared = 0;
    for e in 0..g.shape().n_elements() {
        let [x, y, _] = g.shape().element_centroid(e);
        let d = ((x - BRACKET_HOLE_CENTER[0]).powi(2) + (y - BRACKET_HOLE_CENTER[1]).powi(2)).sqrt();
        if (d - BRACKET_HOLE_RADIUS).abs() < 1e-3 || (d - BRACKET_LUG_RADIUS).abs() < 1e-3 {
            continue;
        }
        let [a, b, _] = BRACKET_GUSSET;
        if ((y - a[1]) * (b[0] - a[0]) - (x - a[0]) * (b[1] - a[1])).abs() < 1e-9 && x <= b[0] {
            assert!(g.is_active(e), "gusset edge element {e}");
            continue;
        }
        let expected = solids.iter().any(|s| ray_cast(s, [x, y])) && !ray_cast(&hole, [x, y]);
        assert_eq!(g.is_active(e), expected, "element {e} at ({x}, {y})");
        compared += 1;
    }
    assert!(compared > 144 * 96 - 50);
    assert!(!g.is_active(g.shape().element_id(118, 72, 0)));
    assert!(g.is_active(g.shape().element_id(10, 90, 0)));
}

/// Two unit elements side by side on the plate: the stage increments add up
/// to the full response, and swapping the deposition order mirrors it.
#[test]
fn two_cell_stage_sum() {
    let text = r#"
[domain]
preset = "rectangle"
resolution = [2, 1]
start = { elements = [0] }
[layers]
count = 2
[[measure.terms]]
kind = "displacement"
nodes = { kind = "extreme", sides = ["top"] }
"#;
    let s = RunConfig::from_toml_str(text, Path::new(".")).unwrap().build().unwrap();
    let mirrored = text.replace("elements = [0]", "elements = [1]");
    let r = RunConfig::from_toml_str(&mirrored, Path::new(".")).unwrap().build().unwrap();
    let left_first = simulate(&s.process(), &TimeField::new(FieldMode::Element, vec![0.0, 1.0]), 100.0, false).unwrap();
    let right_first = simulate(&r.process(), &TimeField::new(FieldMode::Element, vec![1.0, 0.0]), 100.0, false).unwrap();
    assert_eq!(binary_layer(0.0, 2), 1);
    assert_eq!(binary_layer(1.0, 2), 2);
    let sum: Vec<f64> = left_first.du[0].iter().zip(&left_first.du[1]).map(|(a, b)| a + b).collect();
    assert_eq!(sum, left_first.u);
    let shape = s.grid.shape();
    for i in 0..=2 {
        let (v, m) = (shape.node_id(i, 1, 0), shape.node_id(2 - i, 1, 0));
        let (ux, uy) = (left_first.u[2 * v], left_first.u[2 * v + 1]);
        assert!((ux + right_first.u[2 * m]).abs() <= 1e-12 * ux.abs().max(1e-6));
        assert!((uy - right_first.u[2 * m + 1]).abs() <= 1e-12 * uy.abs().max(1e-6));
    }
    assert!(left_first.u[2 * shape.node_id(0, 1, 0) + 1] < 0.0);
}

fn lshape() -> fabseq::grid::DomainGrid {
    build_preset(&Preset::LShape2d, &[16, 12], None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn increments_telescope_to_the_mask(
        t in prop::collection::vec(0.0f64..=1.0, 192),
        beta in 1.0f64..150.0,
        layers in 1usize..16,
    ) {
        let g = lshape();
        let sd = stage_densities(&t, &g, &ProjectionParams::new(layers, beta));
        for e in 0..192 {
            let sum: f64 = (1..=layers).map(|j| sd.increment_at(j, e)).sum();
            let mask = if g.is_active(e) { 1.0 } else { 0.0 };
            prop_assert!((sum - mask).abs() <= 1e-12);
            prop_assert_eq!(sd.rho(layers)[e], mask);
        }
    }

    #[test]
    fn binary_layers_partition_the_component(
        t in prop::collection::vec(0.0f64..=1.0, 192),
        layers in 1usize..16,
    ) {
        let g = lshape();
        let bd = binary_stage_densities(&t, &g, layers);
        for e in g.active_elements() {
            let owner: Vec<usize> = (1..=layers).filter(|&j| bd.increment_at(j, e) == 1.0).collect();
            prop_assert_eq!(owner, vec![binary_layer(t[e], layers)]);
        }
    }

    #[test]
    fn flatness_ignores_rigid_translation(
        u in prop::collection::vec(-1.0f64..1.0, 2 * 17 * 13),
        cx in -50.0f64..50.0,
        cy in -50.0f64..50.0,
        a in -20.0f64..20.0,
    ) {
        let g = lshape();
        let m = DistortionMeasure::new(vec![
            MeasureTerm::Flatness { nodes: NodeSelector::Extreme { sides: vec![Side::Top], samples: None }, axis: Axis::Y },
            MeasureTerm::Flatness { nodes: NodeSelector::Extreme { sides: vec![Side::Right], samples: Some(3) }, axis: Axis::X },
        ]);
        let q = m.compile(&g).unwrap();
        let j = q.evaluate(&u);
        let shifted: Vec<f64> = u.iter().enumerate().map(|(d, v)| v + if d % 2 == 0 { cx } else { cy }).collect();
        prop_assert!((q.evaluate(&shifted) - j).abs() <= 1e-12 * j.max(1.0));
        let scaled: Vec<f64> = u.iter().map(|v| a * v).collect();
        prop_assert!((q.evaluate(&scaled) - a * a * j).abs() <= 1e-12 * (a * a * j).max(1e-300));
    }

    #[test]
    fn displacement_measure_is_quadratic(
        u in prop::collection::vec(-1.0f64..1.0, 2 * 17 * 13),
        a in -20.0f64..20.0,
    ) {
        let g = lshape();
        let m = DistortionMeasure::new(vec![MeasureTerm::Displacement {
            nodes: NodeSelector::Extreme { sides: vec![Side::Top, Side::Right], samples: None },
        }]);
        let q = m.compile(&g).unwrap();
        let j = q.evaluate(&u);
        let scaled: Vec<f64> = u.iter().map(|v| a * v).collect();
        prop_assert!((q.evaluate(&scaled) - a * a * j).abs() <= 1e-12 * (a * a * j).max(1e-300));
        prop_assert!(j >= 0.0);
    }

    #[test]
    fn uniform_fields_are_continuous(v in 0.0f64..=1.0, include in any::<bool>()) {
        let g = lshape();
        let c = Continuity::new(&g, include).unwrap();
        let (g0, grad) = c.evaluate(&vec![v; 192]);
        prop_assert_eq!(g0, 0.0);
        prop_assert!(grad.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn monotone_ramps_have_no_extrema(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let g = lshape();
        let c = Continuity::new(&g, false).unwrap();
        let t: Vec<f64> = (0..192)
            .map(|e| {
                let [x, y, _] = g.shape().element_centroid(e);
                a * x + b * y
            })
            .collect();
        prop_assert!(c.verify_min_max(&g, &t, 0.0).is_empty());
    }

    #[test]
    fn voxel_files_round_trip(values in prop::collection::vec(-1e6f64..1e6, 192)) {
        let g = lshape();
        let f = TimeField::new(FieldMode::Element, values.clone());
        let text = VoxelField::from_time_field(*g.shape(), &f).unwrap().to_text();
        let back = VoxelField::parse(&text, Path::new("memory")).unwrap().into_time_field();
        prop_assert_eq!(back.values(), &values[..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn stage_sum_is_order_independent(seed in any::<u64>(), beta in 10.0f64..100.0) {
        let g = build_preset(&Preset::LShape2d, &[12, 8], None).unwrap();
        let s = RunConfig::from_toml_str(
            "[domain]\npreset = \"lshape2d\"\nresolution = [12, 8]\n[layers]\ncount = 5\n\
             [[measure.terms]]\nkind = \"displacement\"\nnodes = { kind = \"extreme\", sides = [\"top\"] }\n",
            Path::new("."),
        ).unwrap().build().unwrap();
        let base = s.initial_field().unwrap();
        let layout = FieldLayout::new(&g, base.mode());
        let field = fabseq::sensitivity::perturb_field(&base, &layout, 0.5, seed);
        let sim = simulate(&s.process(), &field, beta, false).unwrap();
        prop_assert!(stage_order_independence_check(&sim, seed));
    }
}

#[test]
fn shipped_configs_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let again = RunConfig::from_toml_str(&cfg.to_toml(), &dir).unwrap();
            assert_eq!(cfg, again, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 10);
}
