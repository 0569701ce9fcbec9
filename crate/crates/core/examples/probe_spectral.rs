// scratch diagnostic: error profile of quadrature vs spectral
use nlfd_core::grid::{BoundaryMode, Field, Grid};
use nlfd_core::kernel::KernelSpec;
use nlfd_core::operator::{apply_spectral, DiscreteOperator};

fn main() {
    let sigma: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.5);
    for n in [512usize, 1024, 2048] {
        let l = 40.0;
        let ge = Grid::new(1, l, n, BoundaryMode::ExteriorZero).unwrap();
        let gp = Grid::new(1, 8.0 * l, 8 * n, BoundaryMode::Periodic).unwrap();
        let k = KernelSpec::fractional_power(1, sigma).unwrap();
        let op = DiscreteOperator::assemble(ge, &k).unwrap();
        let f = Field::from_fn(ge, |x| (-0.5 * x[0] * x[0]).exp());
        let fp = Field::from_fn(gp, |x| (-0.5 * x[0] * x[0]).exp());
        let lq = op.apply(&f).unwrap();
        let ls = apply_spectral(&gp, &fp, sigma).unwrap();
        let scale = ls.linf();
        let offset = (7 * n) / 2;
        let mut worst = 0.0f64;
        let mut worst_x = 0.0;
        for i in 0..ge.cell_count() {
            let x = ge.cell_center(i)[0];
            if x.abs() < 0.5 * l {
                let d = (lq.values()[i] - ls.values()[offset + i]).abs() / scale;
                if d > worst {
                    worst = d;
                    worst_x = x;
                }
            }
        }
        println!("n={n} h={:.4} worst={:.3e} at x={:.3}", ge.spacing(), worst, worst_x);
        if n == 1024 {
            for i in (0..ge.cell_count()).step_by(n / 16) {
                let x = ge.cell_center(i)[0];
                let d = lq.values()[i] - ls.values()[offset + i];
                println!("  x={:8.3}  Lq={:12.5e}  Ls={:12.5e}  diff={:9.2e}", x, lq.values()[i], ls.values()[offset + i], d);
            }
        }
    }
}
