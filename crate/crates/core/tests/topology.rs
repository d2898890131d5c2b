use proptest::prelude::*;
use snn_core::topology::{build_random, load_topology, ModelTag, RandomTopologySpec, TopologyError};

#[test]
fn json_round_trip_keeps_hash() {
    let t = build_random(&RandomTopologySpec::default()).unwrap();
    let back = load_topology(t.to_json().as_bytes()).unwrap();
    assert_eq!(back.content_hash(), t.content_hash());
    assert_eq!(back.edges(), t.edges());
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let t = build_random(&RandomTopologySpec { model: ModelTag::Lif, ..Default::default() }).unwrap();
    t.save(&path).unwrap();
    let back = snn_core::topology::NetworkTopology::load(&path).unwrap();
    assert_eq!(back.content_hash(), t.content_hash());
}

#[test]
fn garbage_is_a_parse_error() {
    assert!(matches!(load_topology(b"{not json"), Err(TopologyError::Parse(_))));
}

#[test]
fn bad_density_is_rejected() {
    let spec = RandomTopologySpec { density: 1.5, ..Default::default() };
    assert!(matches!(build_random(&spec), Err(TopologyError::Density(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_topologies_validate(seed in 0u64..1000, hidden in 1usize..20, density in 0.05f64..1.0) {
        let t = build_random(&RandomTopologySpec { seed, n_hidden: hidden, density, ..Default::default() }).unwrap();
        prop_assert!(t.validate().is_ok());
        prop_assert_eq!(t.inputs().len(), 2);
        prop_assert_eq!(t.outputs().len(), 1);
        let again = build_random(&RandomTopologySpec { seed, n_hidden: hidden, density, ..Default::default() }).unwrap();
        prop_assert_eq!(again.content_hash(), t.content_hash());
    }
}
