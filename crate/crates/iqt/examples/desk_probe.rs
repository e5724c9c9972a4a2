use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let cfg = iqt::desk::DeskConfig::desk(7).unwrap();
    let dir = std::env::temp_dir().join("iqt_desk_probe");
    let _ = std::fs::remove_dir_all(&dir);
    let report = iqt::desk::run_desk(&cfg, &dir).unwrap();
    println!("elapsed: {:.1} s", t0.elapsed().as_secs_f64());
    println!(
        "mean ssim enhanced {:.4} baseline {:.4} margin {:.4}",
        report.mean_ssim_enhanced, report.mean_ssim_baseline, report.ssim_margin
    );
    println!("best epoch {} final val mse {:.6}", report.best_epoch, report.final_val_mse);
    for s in &report.subjects {
        println!(
            "  subject {:02}: enhanced {:.4} baseline {:.4}",
            s.subject, s.ssim_enhanced, s.ssim_baseline
        );
    }
}
