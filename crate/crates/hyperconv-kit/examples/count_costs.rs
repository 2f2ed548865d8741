//! Analytic cost accounting for the full network at a 12.6 Mpix RAW
//! input, realized as a (4, 1774, 1774) packed tensor.

use hyperconv_kit::arch::{network_plan, HyperUNetConfig};
use hyperconv_kit::cost::count_network;

fn main() -> hyperconv_kit::Result<()> {
    for (n_fwd, n_embed, n_hid, hyper) in [
        (64, 32, 2048, true),
        (32, 32, 2048, true),
        (32, 16, 2048, true),
        (96, 8, 16, false),
        (64, 8, 16, false),
    ] {
        let cfg = HyperUNetConfig::new(n_fwd, n_embed, n_hid);
        let report = count_network(&network_plan(&cfg, hyper, 1774, 1774)?)?;
        let label = if hyper { format!("hyper ({n_fwd},{n_embed},{n_hid})") } else { format!("plain n_fwd={n_fwd}") };
        println!(
            "{label:<24} params {:>12}  flops {:>16}  peak conv mem {:>6.2} GB",
            report.params(),
            report.flops(),
            report.peak_activation_bytes() as f64 / 1e9
        );
    }
    Ok(())
}
