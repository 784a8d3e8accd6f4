use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oris-vlc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_passes() {
    let o = run(&["validate"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 6);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn simulate_single_trial_is_reproducible() {
    let args = ["simulate", "--trials", "1", "--seed", "7", "--snr-db", "5"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("method,users,oris_elements,snr_db,mean_sinr_db,std_sinr_db,trials\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn sweep_oris_covers_default_sizes() {
    let o = run(&["sweep-oris", "--trials", "1", "--snr-db", "5", "--method", "zf"]);
    assert!(o.status.success());
    let sizes: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').nth(2).unwrap().to_string()).collect();
    assert_eq!(sizes, ["24", "40", "64"]);
}

#[test]
fn config_file_and_override_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# small run\nusers = 3\ntrials = 1\nsnr_db = 10\nmethods = mmse\n").unwrap();
    let out = dir.path().join("report.csv");
    let o = run(&["simulate", "--config", conf.to_str().unwrap(), "--users", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "mmse");
    assert_eq!(row[1], "2");
    assert_eq!(row[3], "10.000000");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "oris_reflectivity = 1.5\n").unwrap();
    let o = run(&["simulate", "--config", conf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oris_reflectivity must lie in (0,1]"));

    assert_eq!(run(&["simulate", "--config", "/nonexistent.conf"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(2));
    let o = run(&["simulate", "--trials", "1", "--method", "zf", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn dump_channels_csv() {
    let o = run(&["dump-channels", "--seed", "3", "--users", "2", "--oris-elements", "24"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("user,led,element,gain"));
    // 2 users x 25 LEDs x (1 LOS + 24 elements)
    assert_eq!(lines.count(), 2 * 25 * 25);
}
