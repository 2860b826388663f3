use tsa::io::{
    write_convergence_csv, write_cost_curves_csv, write_grid_csv, write_level_errors_csv, write_level_stats_csv,
    write_trajectory_csv, write_tree_csv,
};
use tsa::metrics::{fill_orders, ConvergenceRow};
use tsa::oracle::{solve_sl_grid, GridDomain, SlOptions};
use tsa::problems::benchmark;
use tsa::{run_benchmark, PruneConfig, TimeGrid};

fn lines(buf: Vec<u8>) -> Vec<String> {
    String::from_utf8(buf).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn run_outputs_have_expected_shape() {
    let mut b = benchmark("test1", None).unwrap();
    b.dt = 0.25;
    let s = run_benchmark(&b, &PruneConfig::unpruned()).unwrap();

    let mut buf = Vec::new();
    write_tree_csv(&mut buf, &s.built.tree, Some(&s.values)).unwrap();
    let rows = lines(buf);
    assert_eq!(rows[0], "level,id,x_0,x_1,value,argmin_u");
    assert_eq!(rows.len(), 1 + 31);
    assert!(rows.last().unwrap().ends_with(','), "terminal rows have no control");

    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &s.trajectory).unwrap();
    let rows = lines(buf);
    assert_eq!(rows[0], "n,t,x_0,x_1,u_index,step_cost,cumulative_cost");
    assert_eq!(rows.len(), 1 + 5);
    let last: f64 = rows[5].rsplit(',').next().unwrap().parse().unwrap();
    assert!((last - s.values.root_value()).abs() < 1e-12);

    let mut buf = Vec::new();
    let times: Vec<f64> = (0..=4).map(|n| 0.25 * n as f64).collect();
    write_cost_curves_csv(
        &mut buf,
        &times,
        &s.controlled.functional,
        Some(&s.uncontrolled.functional),
    )
    .unwrap();
    let rows = lines(buf);
    assert_eq!(rows[0], "n,t,controlled,uncontrolled");
    assert_eq!(rows.len(), 6);

    let mut buf = Vec::new();
    write_level_stats_csv(&mut buf, &s.built.stats).unwrap();
    let rows = lines(buf);
    assert_eq!(rows[0], "level,nodes,candidates,merged,seconds");
    assert!(rows[1].starts_with("0,1,"));
}

#[test]
fn convergence_table_leaves_first_order_empty() {
    let mut rows = vec![
        ConvergenceRow {
            dt: 0.2,
            tree_nodes: 63,
            cpu_seconds: 0.01,
            err22: 0.09,
            errinf2: 0.12,
            order22: None,
            orderinf2: None,
        },
        ConvergenceRow {
            dt: 0.1,
            tree_nodes: 2047,
            cpu_seconds: 0.02,
            err22: 0.045,
            errinf2: 0.06,
            order22: None,
            orderinf2: None,
        },
    ];
    fill_orders(&mut rows).unwrap();
    let mut buf = Vec::new();
    write_convergence_csv(&mut buf, &rows).unwrap();
    let out = lines(buf);
    assert_eq!(out[0], "Δt,tree_nodes,cpu_seconds,err22,errinf2,order22,orderinf2");
    assert!(out[1].ends_with(",,"));
    assert!(out[2].ends_with(",1,1"), "{}", out[2]);
}

#[test]
fn level_errors_and_grid_dump() {
    let mut buf = Vec::new();
    write_level_errors_csv(&mut buf, &[0.0, 0.5], &[("pruned", &[0.1, 0.2]), ("unpruned", &[0.1])]).unwrap();
    assert_eq!(lines(buf), ["n,t,pruned,unpruned", "0,0,0.1,0.1", "1,0.5,0.2,"]);

    let b = benchmark("vdp1", None).unwrap();
    let domain = GridDomain::cube(2, -1.0, 1.0, 0.5).unwrap();
    let time = TimeGrid::new(0.0, 0.1, 2).unwrap();
    let g = solve_sl_grid(&b.problem, &domain, &time, &b.controls, SlOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_grid_csv(&mut buf, &g).unwrap();
    let out = lines(buf);
    assert_eq!(out[0], "d,dx_0,dx_1,lo_0,lo_1,hi_0,hi_1,steps");
    assert_eq!(out.len(), 2 + 3);
    assert_eq!(out[2].split(',').count(), 1 + 25);
}
