use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exprmol_core::profiles::{load_profiles_path, write_profiles, Delimiter, ProfileSet};
use exprmol_core::synth::cluster_profiles;
use tempfile::TempDir;

const TINY: &str = "seed = 3
[vae]
encoder = [8]
latent = 3
decoder = [8]
epochs = 6
lr = 1e-3
batch = 4

[generator]
embedding = 6
layers = 1
hidden = 12
epochs = 3
batch = 8
probe = 4
max_len = 30
";

fn exprmol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exprmol")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_user_error(o: &Output, code: &str) -> String {
    let err = stderr(o);
    assert_eq!(o.status.code(), Some(2), "{err}");
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{code}]: ")), "{err}");
    err
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let set = cluster_profiles(&[4, 4], 20, 0.5, 1);
        write_profiles(&set, fs::File::create(dir.path().join("profiles.csv")).unwrap(), Delimiter::Comma).unwrap();
        let one = ProfileSet {
            profiles: vec![set.profiles[0].clone()],
            ..set.clone()
        };
        write_profiles(&one, fs::File::create(dir.path().join("query.csv")).unwrap(), Delimiter::Comma).unwrap();
        let smiles = ["CCO", "c1ccccc1", "CC(=O)O", "CCN", "c1ccncc1", "CCCC", "OCCO", "CC(C)O", "c1ccccc1O", "CCOC"];
        let mut pairs = String::from("sample_id\tsmiles\n");
        for (i, s) in smiles.iter().enumerate() {
            pairs.push_str(&format!("{}\t{s}\n", set.profiles[i % 8].sample_id));
        }
        fs::write(dir.path().join("pairs.tsv"), pairs).unwrap();
        fs::write(dir.path().join("run.toml"), TINY).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn run(&self, args: &[&str]) -> Output {
        let cfg = self.path("run.toml");
        let out = self.path("");
        let mut all = vec!["--config", cfg.as_str()];
        all.extend_from_slice(args);
        Command::new(env!("CARGO_BIN_EXE_exprmol"))
            .args(&all)
            .current_dir(&out)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    }

    fn train(&self) {
        self.ok(&["train-vae", "--profiles", &self.path("profiles.csv")]);
        self.ok(&[
            "train-gen",
            "--pairs",
            &self.path("pairs.tsv"),
            "--profiles",
            &self.path("profiles.csv"),
            "--vae",
            &self.path("vae.ckpt"),
        ]);
    }

    fn generate(&self, output: &str, extra: &[&str]) -> String {
        let mut args = vec![
            "generate",
            "--vae",
            "vae.ckpt",
            "--generator",
            "gen.ckpt",
            "--output",
            output,
        ];
        args.extend_from_slice(extra);
        self.ok(&args)
    }
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn missing_profile_file_exits_2_naming_the_path() {
    let o = exprmol(&["train-vae", "--profiles", "/no/such/dir/profiles.csv"]);
    let err = assert_user_error(&o, "E_IO");
    assert!(err.contains("/no/such/dir/profiles.csv"), "{err}");
}

#[test]
fn usage_errors_are_single_line() {
    assert_user_error(&exprmol(&["generate", "--count", "lots"]), "E_USAGE");
    assert_user_error(&exprmol(&["teleport"]), "E_USAGE");
    let f = Fixture::new();
    fs::write(f.dir.path().join("bad.toml"), "[vae]\nepoch = 3\n").unwrap();
    assert_user_error(
        &exprmol(&["--config", &f.path("bad.toml"), "train-vae", "--profiles", &f.path("profiles.csv")]),
        "E_CONFIG",
    );
}

#[test]
fn reverse_twice_restores_the_values() {
    let f = Fixture::new();
    f.ok(&["transform", "--input", "profiles.csv", "--output", "r1.csv", "--reverse"]);
    f.ok(&["transform", "--input", "r1.csv", "--output", "r2.tsv", "--reverse"]);
    let a = load_profiles_path(&PathBuf::from(f.path("profiles.csv"))).unwrap();
    let b = load_profiles_path(&PathBuf::from(f.path("r2.tsv"))).unwrap();
    assert_eq!(a.gene_ids, b.gene_ids);
    for (p, q) in a.profiles.iter().zip(&b.profiles) {
        assert_eq!(p.values, q.values);
    }
}

#[test]
fn singleton_groups_leave_profiles_unchanged() {
    let f = Fixture::new();
    let a = load_profiles_path(&PathBuf::from(f.path("profiles.csv"))).unwrap();
    let mut groups = String::from("sample_id,group\n");
    for p in a.profiles.iter().rev() {
        groups.push_str(&format!("{0},{0}\n", p.sample_id));
    }
    fs::write(f.dir.path().join("groups.csv"), groups).unwrap();
    f.ok(&["transform", "--input", "profiles.csv", "--output", "avg.csv", "--average-by", "groups.csv"]);
    let b = load_profiles_path(&PathBuf::from(f.path("avg.csv"))).unwrap();
    let mut x: Vec<_> = a.profiles.iter().map(|p| (p.sample_id.clone(), p.values.clone())).collect();
    let mut y: Vec<_> = b.profiles.iter().map(|p| (p.sample_id.clone(), p.values.clone())).collect();
    x.sort_by(|p, q| p.0.cmp(&q.0));
    y.sort_by(|p, q| p.0.cmp(&q.0));
    assert_eq!(x, y);
}

#[test]
fn averaging_then_reversal_on_a_three_sample_toy() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).display().to_string();
    fs::write(d("raw.csv"), "sample_id,g1,g2,g3\ns1,1,2,-3\ns2,3,0,-1\ns3,5,5,5\n").unwrap();
    fs::write(d("groups.csv"), "sample_id,group\ns1,drugA\ns2,drugA\ns3,drugB\n").unwrap();
    let o = exprmol(&[
        "transform",
        "--input",
        &d("raw.csv"),
        "--output",
        &d("out.csv"),
        "--average-by",
        &d("groups.csv"),
        "--reverse",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    // drugA = mean(s1, s2) = (2, 1, -2); drugB = s3; then negate
    assert_eq!(
        lines(&dir.path().join("out.csv")),
        ["sample_id,g1,g2,g3", "drugA_rev,-2,-1,2", "drugB_rev,-5,-5,-5"]
    );
}

#[test]
fn training_writes_checkpoints_and_per_epoch_logs() {
    let f = Fixture::new();
    f.train();
    let vlog = lines(&f.dir.path().join("vae_training.log"));
    assert_eq!(vlog[0], "epoch,loss,recon,kl,val_loss");
    assert_eq!(vlog.len(), 7);
    let validity = lines(&f.dir.path().join("validity.log"));
    assert_eq!(validity[0], "epoch,validity");
    assert_eq!(validity.len(), 4);
    for (i, l) in validity[1..].iter().enumerate() {
        let (epoch, v) = l.split_once(',').unwrap();
        assert_eq!(epoch.parse::<usize>().unwrap(), i + 1);
        assert!((0.0..=1.0).contains(&v.parse::<f64>().unwrap()));
    }
    assert_eq!(lines(&f.dir.path().join("gen_training.log")).len(), 4);

    // logs append; checkpoints are rewritten identically
    let before = fs::read(f.dir.path().join("gen.ckpt")).unwrap();
    f.train();
    assert_eq!(lines(&f.dir.path().join("validity.log")).len(), 7);
    assert_eq!(fs::read(f.dir.path().join("gen.ckpt")).unwrap(), before);
}

#[test]
fn generation_defaults_and_determinism() {
    let f = Fixture::new();
    f.train();
    f.generate("a.tsv", &["--profiles", "query.csv"]);
    let a = lines(&f.dir.path().join("a.tsv"));
    assert_eq!(a[0], "index\tsmiles\tvalid\tcanonical");
    assert_eq!(a.len(), 1001);
    f.generate("b.tsv", &["--profiles", "query.csv"]);
    assert_eq!(fs::read(f.path("a.tsv")).unwrap(), fs::read(f.path("b.tsv")).unwrap());
    f.generate("c.tsv", &["--profiles", "query.csv", "--count", "20", "--temperature", "0.7"]);
    assert_eq!(lines(&f.dir.path().join("c.tsv")).len(), 21);

    let o = f.run(&["--seed", "99", "generate", "--profiles", "query.csv", "--vae", "vae.ckpt", "--generator", "gen.ckpt", "--output", "d.tsv"]);
    assert!(o.status.success());
    assert_ne!(fs::read(f.path("a.tsv")).unwrap(), fs::read(f.path("d.tsv")).unwrap());
}

#[test]
fn generation_refuses_mismatched_genes_and_ambiguous_rows() {
    let f = Fixture::new();
    f.train();
    let text = fs::read_to_string(f.path("query.csv")).unwrap().replacen("G0002", "TP53", 1);
    fs::write(f.path("renamed.csv"), text).unwrap();
    let o = f.run(&["generate", "--profiles", "renamed.csv", "--vae", "vae.ckpt", "--generator", "gen.ckpt"]);
    let err = assert_user_error(&o, "E_GENES");
    assert!(err.contains("TP53"), "{err}");
    assert!(!f.dir.path().join("generated.tsv").exists());

    let o = f.run(&["generate", "--profiles", "profiles.csv", "--vae", "vae.ckpt", "--generator", "gen.ckpt"]);
    assert_user_error(&o, "E_DATA");
    f.generate("ok.tsv", &["--profiles", "profiles.csv", "--sample-id", "c1_2", "--count", "5"]);

    let o = f.run(&["generate", "--profiles", "query.csv", "--vae", "gen.ckpt", "--generator", "gen.ckpt"]);
    assert_user_error(&o, "E_CHECKPOINT");
}

#[test]
fn unknown_sample_in_pairs_names_the_row() {
    let f = Fixture::new();
    f.ok(&["train-vae", "--profiles", "profiles.csv"]);
    fs::write(f.path("bad_pairs.tsv"), "sample_id\tsmiles\nc0_0\tCCO\nghost\tCCN\n").unwrap();
    let o = f.run(&["train-gen", "--pairs", "bad_pairs.tsv", "--profiles", "profiles.csv", "--vae", "vae.ckpt"]);
    let err = assert_user_error(&o, "E_INGEST");
    assert!(err.contains("line 3") && err.contains("ghost"), "{err}");
}

#[test]
fn evaluation_report_with_and_without_ligands() {
    let f = Fixture::new();
    f.train();
    f.generate("gen.tsv", &["--profiles", "query.csv", "--count", "60"]);
    let plain = f.ok(&["evaluate", "--generated", "gen.tsv", "--pairs", "pairs.tsv"]);
    assert!(!plain.contains("candidate"));
    for key in ["validity", "uniqueness", "novelty"] {
        let line = plain.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap();
        let v = line.split(" = ").nth(1).unwrap();
        if v != "NA" {
            assert!((0.0..=1.0).contains(&v.parse::<f64>().unwrap()), "{line}");
        }
    }
    assert!(plain.contains("mean_qed = ") && plain.contains("mean_sa = "));

    fs::write(f.path("ligands.smi"), "CCO\nc1ccccc1\n").unwrap();
    f.ok(&["evaluate", "--generated", "gen.tsv", "--pairs", "pairs.tsv", "--ligands", "ligands.smi", "--output", "m.txt"]);
    let report = fs::read_to_string(f.path("m.txt")).unwrap();
    let valid: usize = report.lines().find_map(|l| l.strip_prefix("valid = ")).unwrap().parse().unwrap();
    if valid > 0 {
        assert!(report.contains("candidate_smiles = "));
        assert!(report.contains("candidate_tanimoto = "));
    }
}
