use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spreadcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spreadcode")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn assert_trailer(out: &Output, code: i32) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let status = if code == 0 { "ok" } else { "error" };
    assert_eq!(stdout(out).lines().last(), Some(format!("status={status} code={code}").as_str()));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn params_prints_node_count() {
    let out = spreadcode(&["params", "--B", "6", "--alpha", "2"]);
    assert_trailer(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("n=21") && text.contains("k=3"), "{text}");
}

#[test]
fn partners_in_closed_form_order() {
    let out = spreadcode(&["partners", "--B", "6", "--alpha", "2", "--failed", "1", "--first", "4"]);
    assert_trailer(&out, 0);
    assert_eq!(stdout(&out).lines().next(), Some("N_12 N_10 N_5"));
}

#[test]
fn rho_single_size() {
    let out = spreadcode(&["rho", "--B", "6", "--alpha", "2", "--x", "5"]);
    assert_trailer(&out, 0);
    assert!(stdout(&out).starts_with("x=5 deficient=21 total=20349 "), "{}", stdout(&out));
}

#[test]
fn rho_table_is_independent_of_workers() {
    let one = spreadcode(&["rho", "--B", "6", "--alpha", "2", "--workers", "1"]);
    let four = spreadcode(&["rho", "--B", "6", "--alpha", "2", "--workers", "4"]);
    assert_trailer(&one, 0);
    assert_eq!(one.stdout, four.stdout);
    assert!(stdout(&one).starts_with("x,deficient,total,rho\n0,1,1,0\n"));
}

#[test]
fn usage_and_domain_errors() {
    assert_trailer(&spreadcode(&["frobnicate"]), 2);
    assert_trailer(&spreadcode(&["rho", "--B", "6", "--alpha", "2", "--samples", "10"]), 2);
    assert_trailer(&spreadcode(&["params", "--B", "6", "--alpha", "4"]), 1);
    assert_trailer(&spreadcode(&["rho", "--B", "8", "--alpha", "2", "--x", "10"]), 1);
    assert_trailer(&spreadcode(&["partners", "--B", "6", "--alpha", "2", "--failed", "1", "--first", "1"]), 1);
    assert_trailer(&spreadcode(&["partners", "--B", "6", "--alpha", "2", "--failed", "0", "--first", "1"]), 2);
}

#[test]
fn sampled_rho_is_reproducible() {
    let args = ["rho", "--B", "8", "--alpha", "2", "--x", "6", "--samples", "2000", "--seed", "3"];
    let a = spreadcode(&args);
    assert_trailer(&a, 0);
    assert_eq!(a.stdout, spreadcode(&args).stdout);
}

#[test]
fn bandwidth_table() {
    let out = spreadcode(&["bandwidth", "--B", "6", "--alpha", "2", "--d", "2,3,4"]);
    assert_trailer(&out, 0);
    assert!(stdout(&out).starts_with("d,msr_units,psrc_units\n2,n/a,4\n3,6,3\n4,4,3\n"), "{}", stdout(&out));
}

#[test]
fn availability_csv_shape() {
    let out = spreadcode(&["availability", "--B", "4", "--alpha", "2"]);
    assert_trailer(&out, 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,objup_psrc,objup_mds");
    assert_eq!(lines[1], "0,0,0");
    assert_eq!(lines[101], "1,1,1");
}

#[test]
fn layout_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("layout.txt");
    assert_trailer(&spreadcode(&["layout", "--B", "6", "--alpha", "2", "--out", p(&path)]), 0);
    assert_trailer(&spreadcode(&["verify", "--layout", p(&path)]), 0);
    let text = fs::read_to_string(&path).unwrap().replace("N2: 010000", "N2: 100000");
    fs::write(&path, text).unwrap();
    let out = spreadcode(&["verify", "--layout", p(&path)]);
    assert_trailer(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a spread"));
}

#[test]
fn encode_decode_and_repair_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input.bin");
    let pieces = dir.path().join("pieces");
    let data: Vec<u8> = (0..1000u32).map(|i| (i * 37 % 251) as u8).collect();
    fs::write(&input, &data).unwrap();
    assert_trailer(&spreadcode(&["encode", "--B", "6", "--alpha", "2", "--input", p(&input), "--out-dir", p(&pieces)]), 0);
    assert_eq!(fs::read_dir(&pieces).unwrap().count(), 42);

    let output = dir.path().join("out.bin");
    assert_trailer(&spreadcode(&["decode", "--dir", p(&pieces), "--output", p(&output)]), 0);
    assert_eq!(fs::read(&output).unwrap(), data);
    fs::remove_file(&output).unwrap();
    assert_trailer(&spreadcode(&["decode", "--dir", p(&pieces), "--nodes", "1,2,3", "--output", p(&output)]), 0);
    assert_eq!(fs::read(&output).unwrap(), data);
    let out = spreadcode(&["decode", "--dir", p(&pieces), "--nodes", "1,4,5,10,12", "--output", p(&output)]);
    assert_trailer(&out, 1);

    let originals: Vec<Vec<u8>> = (1..=2).map(|j| fs::read(pieces.join(format!("N1.{j}.piece"))).unwrap()).collect();
    for j in 1..=2 {
        fs::remove_file(pieces.join(format!("N1.{j}.piece"))).unwrap();
    }
    let out = spreadcode(&["repair-plan", "--B", "6", "--alpha", "2", "--failed", "1", "--pair", "4,5", "--dir", p(&pieces)]);
    assert_trailer(&out, 0);
    assert!(stdout(&out).contains("download_units=4"));
    for j in 1..=2 {
        assert_eq!(fs::read(pieces.join(format!("N1.{j}.piece"))).unwrap(), originals[j - 1]);
    }

    let out = spreadcode(&["repair-plan", "--B", "6", "--alpha", "2", "--failed", "1", "--degree", "3", "--dir", p(&pieces)]);
    assert_trailer(&out, 0);
    assert!(stdout(&out).contains("download_units=3"));
    for j in 1..=2 {
        assert_eq!(fs::read(pieces.join(format!("N1.{j}.piece"))).unwrap(), originals[j - 1]);
    }
}

#[test]
fn repair_pair_must_cover() {
    let out = spreadcode(&["repair-plan", "--B", "6", "--alpha", "2", "--failed", "1", "--pair", "2,3"]);
    assert_trailer(&out, 1);
}

#[test]
fn simulate_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.txt");
    fs::write(&scenario, "B=6\nalpha=2\nseed=1\nepochs=3\nkill=1:1\nkill=2:3,7\n").unwrap();
    let out = spreadcode(&["simulate", "--scenario", p(&scenario)]);
    assert_trailer(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("epoch,live,transfers,repairs_ok,repairs_failed,decodable\n1,20,4,1,0,1\n2,19,8,2,0,1\n3,21,0,0,0,1\n"), "{text}");
    assert_eq!(spreadcode(&["simulate", "--scenario", p(&scenario)]).stdout, out.stdout);
    fs::write(&scenario, "B=6\nalpha=2\n").unwrap();
    assert_trailer(&spreadcode(&["simulate", "--scenario", p(&scenario)]), 1);
}
