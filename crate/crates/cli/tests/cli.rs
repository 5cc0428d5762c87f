use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fscap::data::{load_dataset, save_dataset, Compound, Dataset, Provenance};
use fscap::{morgan_fingerprint, parse_smiles};
use tempfile::TempDir;

fn fscap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fscap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_CONFIG: &str = r#"{
  "nbits": 256,
  "encoding_dim": 8,
  "mlp_width": 16,
  "n_layers": 3,
  "n_context": 4,
  "batch_size": 16,
  "base_lr": 0.003,
  "warmup_steps": 10,
  "total_episodes": 1600,
  "steps_per_epoch": 25,
  "n_test_assays": 4
}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(f.path("config.json"), SMALL_CONFIG).unwrap();
        let o = fscap(&[
            "synthesize",
            "--output",
            p(&f.path("data.json")),
            "--nbits",
            "256",
            "--n-assays",
            "12",
            "--molecules-per-assay",
            "20",
            "--library-size",
            "40",
            "--truth",
            p(&f.path("truth.json")),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "train",
            "--dataset",
            self.dir.path().join("data.json").to_str().unwrap().to_string().leak(),
            "--config",
            self.dir.path().join("config.json").to_str().unwrap().to_string().leak(),
            "--out",
            self.dir.path().join(out).to_str().unwrap().to_string().leak(),
        ];
        args.extend_from_slice(extra);
        fscap(&args)
    }
}

#[test]
fn ingest_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("in.tsv");
    let mut text = String::from("smiles\tassay_id\tactivity_nm\n");
    for i in 0..10 {
        text += &format!("{}O\ta\t{}\n", "C".repeat(10 + i), 10 + i);
    }
    text += "CCO\ta\t5\n";
    fs::write(&tsv, &text).unwrap();
    let (out, report) = (dir.path().join("d.json"), dir.path().join("r.tsv"));
    let o = fscap(&["ingest", "--input", p(&tsv), "--output", p(&out), "--report", p(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = fs::read_to_string(&report).unwrap();
    assert!(r.contains("stored_rows\t10\n") && r.contains("dropped_too_few_atoms\t1\n"), "{r}");
    assert_eq!(load_dataset(&out).unwrap().n_compounds(), 10);

    fs::write(&tsv, "smiles\tactivity_nm\nCCCCCCCCCCCC\t4\n").unwrap();
    let o = fscap(&["ingest", "--input", p(&tsv), "--output", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("assay_id"), "{}", stderr(&o));

    fs::write(&tsv, "smiles\tassay_id\tactivity_nm\nCCO\ta\t4\n").unwrap();
    let o = fscap(&["ingest", "--input", p(&tsv), "--output", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no assays survived filters"));
}

#[test]
fn train_is_deterministic_and_logs() {
    let f = Fixture::new();
    let dump = f.path("effective.json");
    let o = f.train("a.json", &["--variant", "no_context", "--dump-config", p(&dump)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = f.train("b.json", &["--variant", "no_context"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read(f.path("a.json")).unwrap();
    assert_eq!(a, fs::read(f.path("b.json")).unwrap());

    let log = fs::read_to_string(f.path("a.json.log.tsv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let loss: f64 = row.split('\t').nth(2).unwrap().parse().unwrap();
        assert!(loss.is_finite());
    }

    // Rerunning from the dumped configuration reproduces the model.
    let o = fscap(&["train", "--config", p(&dump), "--out", p(&f.path("c.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(a, fs::read(f.path("c.json")).unwrap());
}

#[test]
fn train_error_codes() {
    let f = Fixture::new();
    let o = f.train("x.json", &["--base-lr", "1e30"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    fs::write(f.path("bad.json"), "{\"batch\": 3}").unwrap();
    let o = fscap(&["train", "--config", p(&f.path("bad.json")), "--dataset", p(&f.path("data.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = f.train("x.json", &["--variant", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

fn compound(smiles: &str, activity: f64) -> Compound {
    Compound {
        smiles: smiles.to_string(),
        fingerprint: morgan_fingerprint(&parse_smiles(smiles).unwrap(), 3, 256).unwrap(),
        activity,
    }
}

#[test]
fn weak_only_skips_small_assays() {
    let f = Fixture::new();
    let mut assays = BTreeMap::new();
    let mols: Vec<String> = (0..20).map(|i| format!("{}O", "C".repeat(10 + i))).collect();
    assays.insert(
        "big".to_string(),
        mols.iter().enumerate().map(|(i, s)| compound(s, 4.5 + 0.05 * i as f64)).collect(),
    );
    assays.insert(
        "small".to_string(),
        mols[..5].iter().map(|s| compound(s, 5.0)).collect(),
    );
    let ds = Dataset::new(256, 3, assays, Provenance::default());
    save_dataset(&ds, &f.path("data.json")).unwrap();
    let o = f.train(
        "m.json",
        &["--n-context", "8", "--constraint", "weak-only", "--n-test-assays", "0"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(f.path("m.json.log.tsv")).unwrap();
    assert!(log.contains("skipped assay small"), "{log}");
    assert!(stderr(&o).contains("skipping assay \"small\""));
}

#[test]
fn eval_protocols() {
    let f = Fixture::new();
    let o = f.train("m.json", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = f.path("m.json");
    let o = fscap(&["eval", "--model", p(&model), "--dataset", p(&f.path("data.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "group\tn\tpearson_r");
    assert_eq!(lines.len(), 4 + 2, "{report}");
    assert!(lines[5].starts_with("MEAN\t"));

    let o = fscap(&["eval", "--baseline", "tanimoto", "--n-context", "4", "--dataset", p(&f.path("data.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 12 + 2);

    // Screening: label the lower half of each assay active, contexts from
    // the first five compounds.
    let ds = load_dataset(&f.path("data.json")).unwrap();
    let mut labels = String::from("smiles\tassay_id\tactive\n");
    let mut contexts = String::from("smiles\tassay_id\tactivity_log10_nm\n");
    for (id, cs) in ds.assays() {
        let mut acts: Vec<f64> = cs.iter().map(|c| c.activity).collect();
        acts.sort_by(f64::total_cmp);
        let cut = acts[acts.len() / 2];
        for (i, c) in cs.iter().enumerate() {
            labels += &format!("{}\t{id}\t{}\n", c.smiles, u8::from(c.activity < cut));
            if i < 5 {
                contexts += &format!("{}\t{id}\t{}\n", c.smiles, c.activity);
            }
        }
    }
    fs::write(f.path("labels.tsv"), &labels).unwrap();
    fs::write(f.path("contexts.tsv"), &contexts).unwrap();
    let o = fscap(&[
        "eval", "--model", p(&model), "--protocol", "screen", "--dataset", p(&f.path("labels.tsv")),
        "--contexts", p(&f.path("contexts.tsv")), "--k", "10,100", "--out", p(&f.path("screen.tsv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let screen = fs::read_to_string(f.path("screen.tsv")).unwrap();
    let mean = screen.lines().last().unwrap();
    assert!(mean.starts_with("MEAN\t") && mean.ends_with("\t0.000000"), "{screen}");
    assert_eq!(screen.lines().count(), 12 + 2);

    fs::write(f.path("nolabels.tsv"), labels.replace("\tactive\n", "\tactivity\n")).unwrap();
    let o = fscap(&[
        "eval", "--model", p(&model), "--protocol", "screen", "--dataset", p(&f.path("nolabels.tsv")),
        "--contexts", p(&f.path("contexts.tsv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("binary labels"));
}

#[test]
fn probe_reports_accuracy() {
    let f = Fixture::new();
    assert!(f.train("m.json", &[]).status.success());
    let run = |extra: &[&str]| {
        let mut args = vec![
            "probe", "--model", p(&f.path("m.json")).to_string().leak(), "--dataset",
            p(&f.path("data.json")).to_string().leak(), "--classes", "2", "--trials", "20",
        ];
        args.extend_from_slice(extra);
        fscap(&args)
    };
    let o = run(&["--export", p(&f.path("enc.tsv")).to_string().leak()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    let test_acc: f64 = row[6].parse().unwrap();
    assert!(test_acc >= 0.75, "{out}");
    assert_eq!(fs::read_to_string(f.path("enc.tsv")).unwrap().lines().count(), 41);

    assert!(run(&["--shuffle-labels"]).status.success());
    assert_eq!(run(&["--n-context", "100"]).status.code(), Some(2));
}

#[test]
fn predict_contract() {
    let f = Fixture::new();
    assert!(f.train("m.json", &[]).status.success());
    let ds = load_dataset(&f.path("data.json")).unwrap();
    let cs = ds.assays().values().next().unwrap();
    let rows: Vec<String> = cs[..4].iter().map(|c| format!("{}\t{}\n", c.smiles, c.activity)).collect();
    let header = "smiles\tactivity_log10_nm\n";
    fs::write(f.path("ctx.tsv"), format!("{header}{}", rows.concat())).unwrap();
    let mut reversed = rows.clone();
    reversed.reverse();
    fs::write(f.path("ctx_rev.tsv"), format!("{header}{}", reversed.concat())).unwrap();
    let queries: String = cs.iter().map(|c| format!("{}\n", c.smiles)).collect();
    fs::write(f.path("q.txt"), format!("{queries}not-a-smiles(\n")).unwrap();
    fs::write(f.path("empty.txt"), "").unwrap();

    let predict = |ctx: &str, q: &str, out: &str| {
        fscap(&[
            "predict", "--model", p(&f.path("m.json")), "--contexts", p(&f.path(ctx)), "--queries",
            p(&f.path(q)), "--out", p(&f.path(out)),
        ])
    };
    let o = predict("ctx.tsv", "q.txt", "a.tsv");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("not-a-smiles("));
    assert!(predict("ctx_rev.tsv", "q.txt", "b.tsv").status.success());
    let a = fs::read_to_string(f.path("a.tsv")).unwrap();
    assert_eq!(a, fs::read_to_string(f.path("b.tsv")).unwrap());
    // Context compounds are scored like any other query.
    assert_eq!(a.lines().count(), cs.len() + 1);

    assert!(predict("ctx.tsv", "empty.txt", "c.tsv").status.success());
    assert_eq!(fs::read_to_string(f.path("c.tsv")).unwrap(), "query\tpredicted_log10_nm\n");

    fs::write(f.path("ctx3.tsv"), format!("{header}{}", rows[..3].concat())).unwrap();
    assert_eq!(predict("ctx3.tsv", "q.txt", "d.tsv").status.code(), Some(2));
}
