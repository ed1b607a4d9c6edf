use proptest::prelude::*;
use quinr::autodiff::{
    linear_sine_forward, mse_loss, Activation, ParamStore, SineConvention, Tape,
};

fn fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            (up - f(&p)) / (2.0 * h)
        })
        .collect()
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= rel * x.abs().max(y.abs()).max(1e-3))
}

// Loss = Σ c_i · act(scale ⊙ sin(ω0·Wx + b) + bias)_i over the last `n`
// entries, built on the tape with W, b, scale, bias as parameters and x as
// a constant.
fn tape_loss(
    store: &ParamStore,
    x: &[f64],
    c: &[f64],
    omega0: f64,
    conv: SineConvention,
    act: Activation,
    grads: Option<&mut [f64]>,
) -> f64 {
    let mut t = Tape::new();
    let w = t.param(store, "W").unwrap();
    let b = t.param(store, "b").unwrap();
    let s = t.param(store, "scale").unwrap();
    let o = t.param(store, "bias").unwrap();
    let xv = t.constant(x.to_vec());
    let h = t.linear_sine(w, b, xv, omega0, conv).unwrap();
    let tail = t.tail(h, c.len()).unwrap();
    let a = t.affine(tail, s, o).unwrap();
    let y = t.activation(a, act);
    let loss = t.mse(y, c).unwrap();
    if let Some(g) = grads {
        t.backward(loss, g).unwrap();
    }
    t.value(loss)[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_sine_matches_differences(
        w in prop::collection::vec(-0.1f64..0.1, 16),
        b in prop::collection::vec(-1.0f64..1.0, 8),
        x in prop::collection::vec(-1.0f64..1.0, 2),
        c in prop::collection::vec(-1.0f64..1.0, 8),
        siren in any::<bool>(),
    ) {
        let conv = if siren { SineConvention::Siren } else { SineConvention::Literal };
        let omega0 = 30.0;
        let store = ParamStore::from_slices(vec![("W", w.clone()), ("b", b.clone())]);
        let mut t = Tape::new();
        let wv = t.param(&store, "W").unwrap();
        let bv = t.param(&store, "b").unwrap();
        let xv = t.constant(x.clone());
        let h = t.linear_sine(wv, bv, xv, omega0, conv).unwrap();
        prop_assert_eq!(t.value(h), &linear_sine_forward(&w, &b, &x, omega0, conv).unwrap()[..]);
        let loss = t.mse(h, &c).unwrap();
        let mut g = vec![0.0; store.len()];
        t.backward(loss, &mut g).unwrap();

        let f = |p: &[f64]| {
            let h = linear_sine_forward(&p[..16], &p[16..], &x, omega0, conv).unwrap();
            mse_loss(&h, &c).unwrap().0
        };
        let all: Vec<f64> = w.iter().chain(&b).copied().collect();
        prop_assert!(close(&g, &fd(&f, &all), 1e-5));
    }

    #[test]
    fn composed_tape_matches_differences(
        vals in prop::collection::vec(-0.5f64..0.5, 6 * 2 + 6 + 3 + 3),
        x in prop::collection::vec(-1.0f64..1.0, 2),
        c in prop::collection::vec(0.0f64..1.0, 3),
        act in 0usize..4,
    ) {
        let act = [Activation::QRelu, Activation::Relu, Activation::LeakyRelu, Activation::Identity][act];
        let parts = |v: &[f64]| {
            ParamStore::from_slices(vec![
                ("W", v[..12].to_vec()),
                ("b", v[12..18].to_vec()),
                ("scale", v[18..21].to_vec()),
                ("bias", v[21..24].to_vec()),
            ])
        };
        let store = parts(&vals);
        let mut g = vec![0.0; store.len()];
        tape_loss(&store, &x, &c, 3.0, SineConvention::Literal, act, Some(&mut g));
        let f = |p: &[f64]| tape_loss(&parts(p), &x, &c, 3.0, SineConvention::Literal, act, None);
        let numeric = fd(&f, &vals);
        // Piecewise activations are not differentiable at their kink; skip
        // draws that land within the difference step of it.
        let near_kink = {
            let mut t = Tape::new();
            let w = t.param(&store, "W").unwrap();
            let b = t.param(&store, "b").unwrap();
            let xv = t.constant(x.clone());
            let h = t.linear_sine(w, b, xv, 3.0, SineConvention::Literal).unwrap();
            let tail = t.tail(h, 3).unwrap();
            let s = t.param(&store, "scale").unwrap();
            let o = t.param(&store, "bias").unwrap();
            let a = t.affine(tail, s, o).unwrap();
            t.value(a).iter().any(|v| v.abs() < 1e-4)
        };
        prop_assume!(!near_kink);
        prop_assert!(close(&g, &numeric, 1e-5), "{:?} vs {:?}", g, numeric);
    }
}

#[test]
fn slices_cover_the_store() {
    let store = ParamStore::from_slices(vec![
        ("a", vec![1.0; 3]),
        ("b", vec![]),
        ("c", vec![2.0; 4]),
    ]);
    assert_eq!(store.len(), 7);
    assert_eq!(store.grads.len(), 7);
    let mut next = 0;
    for (_, r) in store.slices() {
        assert_eq!(r.start, next);
        next = r.end;
    }
    assert_eq!(next, 7);
    assert_eq!(store.slice_name_of(5), Some("c"));
}
