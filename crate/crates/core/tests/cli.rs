use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

const SMALL: &str = "n_users = 120\nn_antennas = 12\nblock_len = 100\npilot_len = 30\npayload_bits = 25\n\
active_count = 6\nrx_power_db = 0\nnoise_dbm = 20\ntrials = 8\nseed = 3\nfig2_active = 4:8:2\n\
fig2_pilot_lens = 24,30\nfig3_pilot_lens = 10:40:1\nfig3_active = 6\nfig3_sim_step = 10\n";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grantfree")).args(args).output().expect("spawn grantfree")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("grantfree-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn fig2_csv_layout_and_manifest() {
    let dir = scratch("fig2");
    let conf = write_config(&dir, SMALL);
    let out = dir.join("fig2.csv");
    let o = bin(&["fig2", "--config", &conf, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out);
    assert!(rows[0].starts_with("# grantfree fig2 csv v"));
    assert_eq!(
        rows[1],
        "K,L,p_miss,p_false,tau_inf_sq,bler_mixture_lo,bler_mixture_hi,bler_dominant,bler_empirical,ci_half_width,trials"
    );
    assert_eq!(rows.len(), 2 + 6);
    for r in &rows[2..] {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols.len(), 11);
        assert_eq!(cols[10], "8");
        for c in &cols[2..10] {
            let digits = c.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(digits.len(), 17, "{c}");
            c.parse::<f64>().unwrap();
        }
    }
    let manifest = fs::read_to_string(dir.join("fig2.csv.manifest")).unwrap();
    assert!(manifest.contains("# command: fig2"));
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("# tool: grantfree"));

    // the manifest is a config that reproduces the CSV
    let again = dir.join("again.csv");
    let manifest_path = dir.join("fig2.csv.manifest");
    let o = bin(&["fig2", "--config", manifest_path.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn analytic_only_leaves_empirical_columns_empty() {
    let dir = scratch("analytic");
    let conf = write_config(&dir, SMALL);
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    assert!(bin(&["fig2", "--config", &conf, "--out", a.to_str().unwrap(), "--analytic-only"]).status.success());
    assert!(bin(&["fig2", "--config", &conf, "--out", b.to_str().unwrap(), "--trials", "0"]).status.success());
    let rows = lines(&a);
    for r in &rows[2..] {
        assert!(r.ends_with(",,,"), "{r}");
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn fig3_reports_argmin() {
    let dir = scratch("fig3");
    let conf = write_config(&dir, SMALL);
    let out = dir.join("fig3.csv");
    let o = bin(&["fig3", "--config", &conf, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("K = 6: analytical optimum L* ="), "{stdout}");
    let rows = lines(&out);
    assert_eq!(rows[1], "K,L,rate,p_miss,p_false,tau_inf_sq,bler_analytic,bler_empirical,ci_half_width,trials,is_argmin");
    // L = 10..=40 with L > K = 6 and L <= T - c = 75
    assert_eq!(rows.len() - 2, 31);
    assert_eq!(rows[2..].iter().filter(|r| r.ends_with(",1")).count(), 1);
    // simulated every 10th length
    assert_eq!(rows[2..].iter().filter(|r| r.split(',').nth(9) == Some("8")).count(), 4);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn optimize_prints_table_and_writes_csv() {
    let dir = scratch("opt");
    let out = dir.join("opt.csv");
    let o = bin(&["optimize", "--out", out.to_str().unwrap(), "--mode", "fast"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("L* = 153"), "{stdout}");
    assert!(stdout.contains("warning:"));
    let rows = lines(&out);
    assert_eq!(rows[1], "L,p_overall,p_miss,p_false,rate,bler_detected,tau_inf_sq");
    assert_eq!(rows.len() - 2, 200 - 101 + 1);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes() {
    let dir = scratch("exit");
    let bad = write_config(&dir, "n_users = 10\nwhat = 3\n");
    let o = bin(&["fig2", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));

    let o = bin(&["optimize", "--config", dir.join("missing.conf").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let tight = write_config(&dir, "block_len = 150\npilot_len = 90\nactive_count = 100\n");
    let o = bin(&["optimize", "--config", &tight, "--out", dir.join("x.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));

    let o = bin(&["optimize", "--mode", "slow"]);
    assert_eq!(o.status.code(), Some(1));
    fs::remove_dir_all(&dir).ok();
}

const TINY: &str = "n_users = 20\nn_antennas = 8\nblock_len = 60\npilot_len = 12\npayload_bits = 20\nactive_count = 3\n\
rx_power_db = 0\nnoise_dbm = 20\nvalidate_scenarios = 40\n";

#[test]
fn validate_tiny_config_passes_quickly() {
    let dir = scratch("validate");
    let conf = write_config(&dir, TINY);
    let out = dir.join("report.csv");
    let start = Instant::now();
    let o = bin(&["validate", "--config", &conf, "--out", out.to_str().unwrap()]);
    let secs = start.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(secs < 10.0, "{secs} s");
    assert!(stdout.starts_with("check,status,value,limit,detail"));
    let fails: Vec<&str> = stdout.lines().filter(|l| l.contains(",fail,")).collect();
    assert_eq!(o.status.code(), Some(if fails.is_empty() { 0 } else { 3 }));
    assert!(fs::read_to_string(&out).unwrap().starts_with("# grantfree validate csv v"));
    // the distributional checks never fail here
    assert!(stdout.lines().filter(|l| l.starts_with("snr_law")).all(|l| l.contains(",pass,")), "{stdout}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn corrupted_shape_fails_validation() {
    let dir = scratch("corrupt");
    let conf = write_config(&dir, TINY);
    let o = bin(&["validate", "--config", &conf, "--corrupt-shape"]);
    assert_eq!(o.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("snr_law")).all(|l| l.contains(",fail,")), "{stdout}");
    fs::remove_dir_all(&dir).ok();
}
