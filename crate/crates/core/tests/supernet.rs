use nasc_core::autodiff::{Graph, Tensor};
use nasc_core::space::{ArchSpace, Architecture, Binding, Route, Supernet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn standalone_forward_equals_supernet_with_hard_encoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..100 {
        let space = if trial % 2 == 0 {
            ArchSpace::desk()
        } else {
            ArchSpace::paper()
        };
        let net = Supernet::<f64>::new(&space, 3, 4, &mut rng).unwrap();
        let arch = Architecture::random(&space, &mut rng);
        let rows = rng.random_range(1..8);
        let x = Tensor::new(
            vec![rows, 3],
            (0..rows * 3).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();

        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let hard = g.constant(arch.encoding());
        let route = Route::Path {
            ops: arch.ops(),
            gates: Some(hard),
        };
        let pass = net
            .forward::<ChaCha8Rng>(&mut g, xn, route, Binding::Frozen, None)
            .unwrap();
        let via_supernet = g.value(pass.logits).clone();

        let standalone = net.extract(&arch).unwrap();
        assert!(standalone.param_count() <= net.param_count());
        let direct = standalone.predict(&x, arch.ops()).unwrap();
        let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&via_supernet), bits(&direct), "trial {trial}");
    }
}

#[test]
fn extract_rejects_foreign_architectures() {
    let space = ArchSpace::desk();
    let net = Supernet::<f64>::new(&space, 2, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let wrong = Architecture::new(vec![0; 3], 4).unwrap();
    assert!(net.extract(&wrong).is_err());
}
