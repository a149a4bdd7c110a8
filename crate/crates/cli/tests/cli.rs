use std::fs;
use std::path::Path;
use std::process::Command;

use lowfr_cli::io::{read_dataset, write_dataset};
use lowfr_cli::run;

fn lowfr(args: &[&str]) -> i32 {
    let mut all = vec!["lowfr"];
    all.extend_from_slice(args);
    run(all)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, scenario: &str, seed: &str, n: &str) {
    assert_eq!(
        lowfr(&["simulate", "--scenario", scenario, "--seed", seed, "--n", n, "--out", p(dir)]),
        0
    );
}

const QUICK: &[&str] = &["--chains", "2", "--warmup", "150", "--samples", "100", "--jobs", "1"];

fn fit(data: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["fit", "--data", p(data), "--out", p(out)];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(extra);
    lowfr(&args)
}

#[test]
fn simulate_is_deterministic_and_shaped() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "intro1", "7", "50");
    simulate(&b, "intro1", "7", "50");
    assert_eq!(fs::read(a.join("data.csv")).unwrap(), fs::read(b.join("data.csv")).unwrap());
    assert_eq!(fs::read(a.join("truth.csv")).unwrap(), fs::read(b.join("truth.csv")).unwrap());

    let s1 = tmp.path().join("s1");
    simulate(&s1, "s1", "1", "200");
    let text = fs::read_to_string(s1.join("data.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 2 + 30);
    assert_eq!(&header[..3], &["id", "y", "x_e1_1"]);
    assert_eq!(lines.count(), 200);
    assert!(s1.join("config.resolved").exists());
}

#[test]
fn usage_and_io_errors_have_stable_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lowfr(&["simulate", "--scenario", "s1"]), 2);
    assert_eq!(lowfr(&["simulate", "--scenario", "s9", "--out", p(tmp.path())]), 2);
    assert_eq!(lowfr(&["frobnicate"]), 2);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let nested = blocker.join("out");
    assert_eq!(lowfr(&["simulate", "--scenario", "s1", "--out", p(&nested)]), 3);
    let missing = tmp.path().join("nope.csv");
    assert_eq!(lowfr(&["fit", "--data", p(&missing), "--out", p(tmp.path())]), 3);
    let garbled = tmp.path().join("bad.csv");
    fs::write(&garbled, "id,y,x_a_1\n1,zz,3\n").unwrap();
    assert_eq!(lowfr(&["fit", "--data", p(&garbled), "--out", p(tmp.path())]), 2);
    assert_eq!(lowfr(&["--help"]), 0);
}

#[test]
fn binary_reports_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_lowfr"))
        .args(["simulate", "--scenario", "intro1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(env!("CARGO_BIN_EXE_lowfr"))
        .args(["simulate", "--scenario", "intro2", "--n", "10", "--out", p(tmp.path())])
        .env("LOWFR_JOBS", "1")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let resolved = fs::read_to_string(tmp.path().join("config.resolved")).unwrap();
    assert!(resolved.contains("jobs = 1"));
}

#[test]
fn data_csv_round_trip_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sim");
    assert_eq!(
        lowfr(&["simulate", "--scenario", "s3", "--n", "40", "--mask", "0.1", "--out", p(&dir)]),
        0
    );
    let first = dir.join("data.csv");
    let data = read_dataset(&first).unwrap();
    assert!(data.has_missing());
    let second = tmp.path().join("again.csv");
    write_dataset(&second, &data).unwrap();
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn data_reader_accepts_covariates_and_any_column_order() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    fs::write(
        &path,
        "x_b_2,id,cov_sex,y,x_a_1,x_b_1,x_a_2\n0.5,s1,1,2.0,1,,3\n-1,s2,0,0.5,2,4,\n",
    )
    .unwrap();
    let d = read_dataset(&path).unwrap();
    assert_eq!(d.exposure_names(), &["b".to_string(), "a".to_string()]);
    assert_eq!(d.covariate_names(), &["sex".to_string()]);
    assert_eq!(d.x_row(0), &[0.0, 0.5, 1.0, 3.0]);
    assert_eq!(d.missing_row(0), &[true, false, false, false]);
    assert_eq!(d.missing_row(1), &[false, false, false, true]);
    fs::write(&path, "id,y,x_a_1,x_a_3\n1,1,1,1\n").unwrap();
    assert!(read_dataset(&path).is_err());
}

#[test]
fn config_file_layers_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("run.conf");
    let out = tmp.path().join("sim");
    fs::write(&conf, format!("[simulate]\nscenario = intro2\nn = 30\nout = {}\n", out.display())).unwrap();
    assert_eq!(lowfr(&["simulate", "--config", p(&conf), "--seed", "4"]), 0);
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("scenario = intro2") && resolved.contains("seed = 4") && resolved.contains("n = 30"));

    // Re-running from the resolved file reproduces the outputs.
    let copy = tmp.path().join("copy");
    let replay = tmp.path().join("replay.conf");
    fs::write(&replay, resolved.replace(p(&out), p(&copy))).unwrap();
    assert_eq!(lowfr(&["simulate", "--config", p(&replay)]), 0);
    assert_eq!(fs::read(out.join("data.csv")).unwrap(), fs::read(copy.join("data.csv")).unwrap());

    fs::write(&conf, "[simulate]\nscenario = s1\nbogus = 1\n").unwrap();
    assert_eq!(lowfr(&["simulate", "--config", p(&conf), "--out", p(&out)]), 2);
    fs::write(&conf, "[fit]\nmodel = lowfr\n").unwrap();
    assert_eq!(lowfr(&["simulate", "--config", p(&conf), "--scenario", "s1", "--out", p(&out)]), 2);
}

#[test]
fn direct_fit_pipeline_and_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "intro1", "3", "100");
    let out = tmp.path().join("fit");
    assert_eq!(fit(&sim.join("data.csv"), &out, &["--model", "direct", "--rank", "1"]), 0);
    for f in ["draws.csv", "diagnostics.csv", "induced.csv", "config.resolved"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("imputed.csv").exists());
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("source,name,rhat,ess_bulk,ess_tail,divergences"));
    assert!(diag.contains("induced,alpha[e1_1]"));
    assert!(diag.lines().last().unwrap().starts_with("sampler,total,"));

    let groups = tmp.path().join("groups.txt");
    fs::write(&groups, "# parent compounds\nDEP = e2\nPAIR = e1, e3 @ 1, 2\n").unwrap();
    let eff = tmp.path().join("eff");
    assert_eq!(
        lowfr(&[
            "effects",
            "--fit",
            p(&out),
            "--groups",
            p(&groups),
            "--surface",
            "e1_1;e1_2",
            "--grid",
            "-2:2:0.25",
            "--out",
            p(&eff),
        ]),
        0
    );
    let effects = fs::read_to_string(eff.join("effects.csv")).unwrap();
    let row = |label: &str| -> Vec<String> {
        effects
            .lines()
            .find(|l| l.starts_with(&format!("{label},")))
            .unwrap_or_else(|| panic!("no row {label}"))
            .split(',')
            .skip(1)
            .map(str::to_string)
            .collect()
    };
    assert_eq!(row("group[DEP]"), row("cum[e2]"));
    assert_eq!(effects.lines().next().unwrap(), "label,mean,lo95,hi95,excludes_zero");
    let surface = fs::read_to_string(eff.join("surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 17 * 17);

    fs::write(&groups, "").unwrap();
    assert_eq!(lowfr(&["effects", "--fit", p(&out), "--groups", p(&groups)]), 2);
    fs::write(&groups, "A = e1\nB = e99\n").unwrap();
    assert_eq!(lowfr(&["effects", "--fit", p(&out), "--groups", p(&groups)]), 2);
    assert_eq!(lowfr(&["effects", "--fit", p(&out), "--surface", "e1_1;e1_1"]), 2);
    assert_eq!(lowfr(&["ppc", "--fit", p(&out)]), 2);

    let cv = tmp.path().join("cv");
    assert_eq!(lowfr(&["crossval", "--fit", p(&out), "--folds", "3", "--out", p(&cv)]), 0);
    let text = fs::read_to_string(cv.join("cv.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 + 2);
    assert!(text.contains("\npooled,100,") && text.contains("\nin_sample,100,"));
}

#[test]
fn group_file_errors_name_the_line() {
    use lowfr::effects::Labels;
    use lowfr_cli::commands::parse_groups;
    use lowfr_cli::error::CliError;
    let labels = Labels::new(vec!["MBP".into(), "MCPP".into(), "MEP".into()], 3);
    let g = parse_groups("DBP = MBP, MCPP\nDEP: MEP_2\n", &labels, "g.txt").unwrap();
    assert_eq!(g[0].columns, vec![0, 1, 2, 3, 4, 5]);
    assert_eq!(g[1].columns, vec![7]);
    let err = parse_groups("DBP = MBP\n\nbroken line\n", &labels, "g.txt").unwrap_err();
    assert!(matches!(&err, CliError::Usage(m) if m.contains("g.txt line 3")), "{err}");
    assert!(parse_groups("# nothing\n", &labels, "g.txt").is_err());
    assert!(parse_groups("X = MBP @ 4\n", &labels, "g.txt").is_err());
}

#[test]
fn lowfr_fit_with_missing_values_writes_imputations_and_ppc() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert_eq!(
        lowfr(&["simulate", "--scenario", "s1", "--n", "40", "--mask", "0.05", "--out", p(&sim)]),
        0
    );
    let out = tmp.path().join("fit");
    assert_eq!(fit(&sim.join("data.csv"), &out, &["--k", "auto"]), 0);
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    let k_line = resolved.lines().find(|l| l.starts_with("k = ")).unwrap();
    assert!(k_line[4..].parse::<usize>().is_ok(), "{k_line}");
    let imputed = fs::read_to_string(out.join("imputed.csv")).unwrap();
    assert_eq!(imputed.lines().count(), 1 + 60);
    assert_eq!(lowfr(&["ppc", "--fit", p(&out)]), 0);
    let ppc = fs::read_to_string(out.join("ppc").join("ppc.csv")).unwrap();
    assert_eq!(ppc.lines().count(), 41);
    let marg = tmp.path().join("marg");
    assert_eq!(lowfr(&["ppc", "--fit", p(&out), "--mode", "marginal", "--out", p(&marg)]), 0);
    assert_eq!(fs::read_to_string(marg.join("ppc.csv")).unwrap().lines().count(), 100);
}

#[test]
fn benchmark_smoke_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let run_once = |name: &str| {
        let out = tmp.path().join(name);
        let code = lowfr(&[
            "benchmark", "--scenario", "s1", "--reps", "2", "--models", "direct", "--n", "60", "--chains", "2",
            "--warmup", "100", "--samples", "100", "--seed", "5", "--out", p(&out),
        ]);
        assert_eq!(code, 0);
        fs::read_to_string(out.join("metrics.csv")).unwrap()
    };
    let a = run_once("a");
    assert_eq!(a, run_once("b"));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 1 + 2 + 1);
    assert!(lines[0].starts_with("model,replicate,status,main_mse,interaction_mse"));
    assert!(lines[3].starts_with("direct,mean,2/2,"));
}
