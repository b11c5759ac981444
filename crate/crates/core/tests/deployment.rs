use wsn_core::field::{deploy, FieldConfig};
use wsn_core::Region;

/// Area of a disk intersected with the rectangle [0, w] x [0, h], by the
/// midpoint rule over vertical strips.
fn disk_in_rect_area(cx: f64, cy: f64, r: f64, w: f64, h: f64) -> f64 {
    let lo = (cx - r).max(0.0);
    let hi = (cx + r).min(w);
    let steps = 1_000_000;
    let dx = (hi - lo) / steps as f64;
    (0..steps)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * dx;
            let half = (r * r - (x - cx).powi(2)).max(0.0).sqrt();
            ((cy + half).min(h) - (cy - half).max(0.0)).max(0.0) * dx
        })
        .sum()
}

#[test]
fn quadrature_matches_known_areas() {
    // Quarter disk in the corner and a disk fully inside.
    let q = disk_in_rect_area(0.0, 0.0, 100.0, 1000.0, 1000.0);
    assert!((q - std::f64::consts::PI * 1e4 / 4.0).abs() < 1e-3);
    let full = disk_in_rect_area(500.0, 500.0, 100.0, 1000.0, 1000.0);
    assert!((full - std::f64::consts::PI * 1e4).abs() < 1e-3);
}

#[test]
fn inner_fraction_matches_area_ratio() {
    let field = FieldConfig::table1();
    let c = field.region_center;
    let expected =
        disk_in_rect_area(c.x, c.y, field.inner_radius, field.width, field.height) / (field.width * field.height);
    let nodes = deploy(10_000, &field, 2.0, 42).unwrap();
    let inner = nodes.iter().filter(|n| n.region == Region::Inner).count() as f64 / 1e4;
    assert!(
        (inner - expected).abs() <= 0.02 * expected,
        "inner {inner}, area ratio {expected}"
    );
}

#[test]
fn inner_population_exceeds_outer() {
    let field = FieldConfig::table1();
    let mut larger = 0;
    let mut total_inner = 0usize;
    let seeds = 1..=30u64;
    for seed in seeds.clone() {
        let nodes = deploy(100, &field, 2.0, seed).unwrap();
        let inner = nodes.iter().filter(|n| n.region == Region::Inner).count();
        total_inner += inner;
        if inner > 100 - inner {
            larger += 1;
        }
    }
    assert!(
        total_inner * 2 > 100 * seeds.count(),
        "pooled inner share not above half"
    );
    assert!(larger >= 25, "inner larger in only {larger}/30 deployments");
}
