//! Property tests over randomly generated pharmacophores.

use pharm_core::{build_graph, FeaturePoint, FeatureType, Pharmacophore};
use proptest::prelude::*;

fn arb_point() -> impl Strategy<Value = FeaturePoint> {
    (0usize..7, prop::array::uniform3(-20.0f64..20.0))
        .prop_map(|(code, pos)| FeaturePoint::new(FeatureType::from_code(code).unwrap(), pos))
}

fn arb_pharmacophore() -> impl Strategy<Value = Pharmacophore> {
    prop::collection::vec(arb_point(), 1..12).prop_map(|points| Pharmacophore::new("prop", points))
}

proptest! {
    #[test]
    fn dist_matrix_is_symmetric_with_zero_diagonal(p in arb_pharmacophore()) {
        let g = build_graph(&p).unwrap();
        let n = g.size();
        for i in 0..n {
            prop_assert_eq!(g.dist(i, i), 0.0);
            for j in 0..n {
                prop_assert_eq!(g.dist(i, j), g.dist(j, i));
                prop_assert!(g.dist(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn jsonl_round_trip(p in arb_pharmacophore()) {
        prop_assume!(p.points.len() >= 3);
        let record = pharm_core::LigandRecord::new("L0", Some(false), vec![
            Pharmacophore::new("L0#0", p.points),
        ]);
        let mut buf = Vec::new();
        pharm_core::serialize_records(&mut buf, &[record.clone()]).unwrap();
        let back = pharm_core::parse_pharmacophores(buf.as_slice()).unwrap();
        prop_assert_eq!(back, vec![record]);
    }
}
