use presence_bench::{fragmentation, grid_case, runner};
use presence_core::brw::{u_grid, v_tilted};
use presence_core::frag::v_levy;

#[test]
fn grid_workload_is_a_probability() {
    let k = grid_case(10, 0.01);
    let u = u_grid(&k.model, &k.f, k.n, &k.spec).unwrap();
    let x = u.at(0.5);
    assert!(x > 0.0 && x <= 1.0, "{x}");
}

#[test]
fn sampled_workloads_are_worker_independent() {
    let k = grid_case(20, 0.01);
    let a = v_tilted(&k.model, &k.f, k.n, 2.0, 0.0, 3000, &runner(1)).unwrap();
    let b = v_tilted(&k.model, &k.f, k.n, 2.0, 0.0, 3000, &runner(4)).unwrap();
    assert_eq!(a, b);
    let d = fragmentation();
    let a = v_levy(&d, 2.0, 5.0, 0.0, 0.0, 1.0, 3000, &runner(1)).unwrap();
    let b = v_levy(&d, 2.0, 5.0, 0.0, 0.0, 1.0, 3000, &runner(3)).unwrap();
    assert_eq!(a, b);
}
