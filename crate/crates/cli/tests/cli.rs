use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use netanomaly::data::io::parse_alarms;

const BIN: &str = env!("CARGO_BIN_EXE_netanomaly");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["pca", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    let expect = [
        ("pca", &["--alpha", "[default: 0.001]", "[default: 300]", "--seed", "--out", "--config"][..]),
        ("sketch-change", &["[default: 1024]", "[default: ewma]", "[default: 0.3]"]),
        ("gamma", &["[default: 16]", "[default: 0.1]", "[default: buckets]"]),
        ("hhh", &["[default: copy_all]", "[default: 0.05]", "[default: 32]"]),
        ("extract", &["[default: sip,dip,sp,dp,packets,bytes]", "[default: 256]", "[default: 20]"]),
        ("anomography", &["[default: fourier]", "[default: omp]", "[default: 5]"]),
    ];
    for (cmd, needles) in expect {
        let o = run(&[cmd, "--help"]);
        let text = ok(&o);
        for n in needles {
            assert!(text.contains(n), "{cmd} --help lacks {n}");
        }
    }
    for cmd in [
        "pca", "entropy-pca", "defeat", "astute", "distpca-sim", "sketch-change", "gamma", "hhh", "wavelet", "kalman", "statglr",
        "anomography", "extract", "roc", "synth",
    ] {
        let text = ok(&run(&[cmd, "--help"]));
        assert!(text.contains("--seed") && text.contains("[default: 1]"), "{cmd}");
    }
}

#[test]
fn portscan_pipeline_names_scan_destination() {
    let trace = ok(&run(&["synth", "--anomaly", "portscan", "--seed", "7"]));
    let out = ok(&run_stdin(&["extract"], trace.as_bytes()));
    // the scanned host is synth::dest_ip(9)
    let line = out.lines().find(|l| l.contains("DIP=172.16.72.1")).expect("item-set with the scan DIP");
    assert!(line.contains("SP=40000"), "{line}");
}

#[test]
fn clean_links_stay_near_the_false_alarm_rate() {
    let dir = tempfile::tempdir().unwrap();
    let links = dir.path().join("links.csv");
    std::fs::write(&links, ok(&run(&["synth", "--kind", "links", "--seed", "2"]))).unwrap();
    let out = ok(&run(&["pca", "--links", path(&links), "--alpha", "0.05"]));
    let alarms = parse_alarms(&out).unwrap();
    assert!(alarms.len() * 10 <= 96, "{} alarms in 96 bins", alarms.len());
    assert!(alarms.iter().all(|a| a.score >= a.threshold));
}

#[test]
fn spiked_link_is_attributed_to_its_flow() {
    let dir = tempfile::tempdir().unwrap();
    let links = dir.path().join("links.csv");
    let routing = dir.path().join("routing.txt");
    let text = ok(&run(&["synth", "--kind", "links", "--spike-flow", "23", "--routing-out", path(&routing)]));
    std::fs::write(&links, text).unwrap();
    let pca = parse_alarms(&ok(&run(&["pca", "--links", path(&links), "--routing", path(&routing)]))).unwrap();
    assert!(pca.iter().any(|a| a.t_index == 60 && a.keys.first().map(String::as_str) == Some("flow23")));
    let anom = parse_alarms(&ok(&run(&["anomography", "--links", path(&links), "--routing", path(&routing)]))).unwrap();
    assert_eq!(anom.len(), 1);
    assert_eq!((anom[0].t_index, anom[0].keys[0].as_str()), (60, "flow23"));
}

#[test]
fn data_errors_exit_two() {
    let o = run_stdin(&["extract"], b"t,sip,dip\n1,2,3\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    let o = run(&["pca", "--links", "/nonexistent/links.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_parameters_exit_one() {
    let trace = ok(&run(&["synth", "--bins", "8", "--flows-per-bin", "20"]));
    let o = run_stdin(&["defeat", "--l", "9"], trace.as_bytes());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(run(&["hhh", "--rule", "bogus"]).status.code(), Some(1));
    assert_eq!(run(&["kalman", "--method", "bogus"]).status.code(), Some(1));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "seed = 5\n[synth]\nbins = 4\nflows_per_bin = 10\n").unwrap();
    let from_file = ok(&run(&["synth", "--config", path(&cfg)]));
    let explicit = ok(&run(&["synth", "--seed", "5", "--bins", "4", "--flows-per-bin", "10"]));
    assert_eq!(from_file, explicit);
    let overridden = ok(&run(&["synth", "--config", path(&cfg), "--bins", "3"]));
    let times: Vec<f64> = overridden.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(times.iter().all(|t| *t < 900.0));

    std::fs::write(&cfg, "[synth]\nbogus = 1\n").unwrap();
    assert_eq!(run(&["synth", "--config", path(&cfg)]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--config", "/nonexistent.ini"]).status.code(), Some(1));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("roc.csv");
    let o = run(&["roc", "--len", "200", "--shift-start", "100", "--out", path(&out)]);
    assert!(ok(&o).is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("fpr,tpr\n") && text.contains("auc="));
}

#[test]
fn roc_from_scored_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("scores.csv");
    std::fs::write(&input, "score,label\n0.9,1\n0.8,1\n0.3,0\n0.1,0\n").unwrap();
    let text = ok(&run(&["roc", "--input", path(&input)]));
    assert!(text.trim_end().ends_with("auc=1.000000"), "{text}");
}
