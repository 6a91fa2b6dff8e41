use membrane_core::greens::{ColumnSource, FullSpaceGreen};
use membrane_core::verify::{check_closeness, ScalePolicy};

// x = y at the centre, r = d(y)/2 = 1/4, K = 2. At these sizes r < 192h, so
// only the relaxed policy runs; the value is monitored, not bounded.
#[test]
fn monitored_value_decreases_with_the_baseline() {
    let source = ColumnSource::direct();
    let f = FullSpaceGreen::shared().unwrap();
    let c = [0.5; 4];
    let run =
        |n| check_closeness(&source, f, c, c, n, 0.25, 2.0, ScalePolicy::Relaxed, 1e-8).unwrap();
    let a = run(16);
    let b = run(32);
    eprintln!("closeness n=16: {:e}, n=32: {:e}", a.value, b.value);
    assert!(!a.scale_satisfied && !b.scale_satisfied);
    assert_eq!(b.required_n, 768);
    assert!(b.value < a.value);

    let strict = check_closeness(&source, f, c, c, 16, 0.25, 2.0, ScalePolicy::Strict, 1e-8);
    assert!(matches!(strict, Err(membrane_core::Error::Precondition(_))));
}
