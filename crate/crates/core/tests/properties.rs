use proptest::prelude::*;
use steinpp::discrepancy::{config_dtv, symmetric_difference, MatchMode};
use steinpp::geometry::{dist, wrap_coord};
use steinpp::pointproc::{knn_distance, knn_distance_brute, PointConfiguration};

const PALETTE: [[f64; 2]; 5] = [[0.1, 0.2], [0.5, 0.5], [0.9, 0.05], [0.3, 0.75], [0.0, 0.0]];

fn config(picks: &[usize]) -> PointConfiguration {
    let pts: Vec<Vec<f64>> = picks.iter().map(|&i| PALETTE[i].to_vec()).collect();
    PointConfiguration::from_points(2, &pts).unwrap()
}

fn picks() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..PALETTE.len(), 0..8)
}

proptest! {
    #[test]
    fn dtv_is_a_metric(a in picks(), b in picks(), c in picks()) {
        let (x, y, z) = (config(&a), config(&b), config(&c));
        let m = MatchMode::Coordinates;
        let d = |p: &PointConfiguration, q: &PointConfiguration| config_dtv(p, q, m);
        prop_assert_eq!(d(&x, &x), 0);
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z));
        if d(&x, &y) == 0 {
            let (mut s, mut t) = (a.clone(), b.clone());
            s.sort();
            t.sort();
            prop_assert_eq!(s, t);
        }
        let sym = symmetric_difference(&x, &y, m);
        prop_assert!(d(&x, &y) <= sym && sym <= 2 * d(&x, &y));
    }

    #[test]
    fn dtv_ignores_order(a in picks(), shift in 0usize..8) {
        let mut b = a.clone();
        if !b.is_empty() {
            let s = shift % b.len();
            b.rotate_left(s);
        }
        prop_assert_eq!(config_dtv(&config(&a), &config(&b), MatchMode::Coordinates), 0);
    }

    #[test]
    fn torus_distance_bounds(x in prop::array::uniform2(0.0f64..1.0), y in prop::array::uniform2(0.0f64..1.0), s in prop::array::uniform2(-3.0f64..3.0)) {
        let d = dist(&x, &y);
        prop_assert!(d <= (0.5f64).sqrt() + 1e-15);
        prop_assert!((d - dist(&y, &x)).abs() == 0.0);
        let xs = [wrap_coord(x[0] + s[0]), wrap_coord(x[1] + s[1])];
        let ys = [wrap_coord(y[0] + s[0]), wrap_coord(y[1] + s[1])];
        prop_assert!((d - dist(&xs, &ys)).abs() < 1e-12);
    }

    #[test]
    fn knn_matches_brute_force(coords in prop::collection::vec(prop::array::uniform2(0.0f64..1.0), 1..50), k in 1usize..5, q in prop::array::uniform2(0.0f64..1.0)) {
        let pts: Vec<Vec<f64>> = coords.iter().map(|p| p.to_vec()).collect();
        let w = PointConfiguration::from_points(2, &pts).unwrap();
        match (knn_distance(&q, &w, k, false), knn_distance_brute(&q, &w, k, false)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
