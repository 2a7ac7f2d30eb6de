// Scratch probe for scenario calibration (not shipped).
use hbubble::cli::Scenario;
use hbubble::functionals::Workspace;
use hbubble::melnikov::{find_gamma_critical, GammaSearchOpts, ScanBox};
use hbubble::reduction::{PhiSearchOpts, Reductor};
use nalgebra::Vector3;

fn main() {
    let t0 = std::time::Instant::now();
    let red = Reductor::new(Workspace::new(16).unwrap()).unwrap();
    println!("reductor ready ({:.1}s)", t0.elapsed().as_secs_f64());

    for (name, scenario, eps) in [
        ("thm1", Scenario::Thm1, 1e-2),
        ("thm3", Scenario::Thm3, 1e-2),
    ] {
        let field = scenario.field();
        let gopts = GammaSearchOpts {
            resolution: 9,
            ..Default::default()
        };
        let gbox = scenario.default_box();
        let gr = find_gamma_critical(&field, 1.0, gbox, &gopts).unwrap();
        println!("{name} gamma criticals ({:.1}s):", t0.elapsed().as_secs_f64());
        for c in &gr.critical_points {
            println!(
                "  {:?} at ({:+.4}, {:+.4}, {:+.4}) value {:+.4e}",
                c.kind, c.location[0], c.location[1], c.location[2], c.value
            );
        }
        let popts = PhiSearchOpts {
            scan_n: 9,
            ..Default::default()
        };
        let pr = red.find_phi_critical(eps, &field, gbox, &popts).unwrap();
        println!(
            "{name} phi criticals at eps={eps:.0e} ({:.1}s), skipped {} scan_failures {}:",
            t0.elapsed().as_secs_f64(),
            pr.skipped_seeds,
            pr.scan_failures
        );
        for c in &pr.critical_points {
            // Distance to nearest gamma critical point.
            let d = gr
                .critical_points
                .iter()
                .map(|g| (Vector3::from(g.location) - c.p).norm())
                .fold(f64::INFINITY, f64::min);
            println!(
                "  {:?} at ({:+.6}, {:+.6}, {:+.6}) phi-E0 {:+.3e} |gradE| {:.1e} dist_to_gamma {:.3}",
                c.kind,
                c.p.x,
                c.p.y,
                c.p.z,
                c.phi - 4.0 * std::f64::consts::PI / 3.0,
                c.full_gradient_norm,
                d
            );
        }
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
