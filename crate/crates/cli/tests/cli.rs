use std::path::PathBuf;
use std::process::{Command, Output};

use axiscomp_cli::{ElementsFile, Manifest, TensorFile};
use axiscomp_core::attention::{vanilla_attention, AttentionInputs};
use axiscomp_core::mrep::magnitude_vector;
use axiscomp_core::signal::max_abs_diff;
use axiscomp_core::{sample, BlockRotation, Element, Signal};
use tempfile::TempDir;

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn manifest(&self, name: &str, m: &Manifest) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, m.to_toml()).unwrap();
        p
    }

    fn tensor(&self, name: &str, t: &TensorFile) -> PathBuf {
        let p = self.path(name);
        t.write(&p).unwrap();
        p
    }

    fn signal(&self, name: &str, s: &Signal) -> PathBuf {
        self.tensor(name, &TensorFile::from_signal(s))
    }

    fn elements(&self, name: &str, e: &[Element]) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, ElementsFile::from_elements(e).to_toml()).unwrap();
        p
    }
}

fn axiscomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_axiscomp"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

fn elements_out(text: &str, m: &Manifest) -> Vec<Element> {
    ElementsFile::parse(text)
        .unwrap()
        .elements(&m.basis().unwrap())
        .unwrap()
}

fn rotation_manifest(seed: u64, axes: usize, blocks: usize) -> Manifest {
    let mut rng = sample::rng(seed);
    Manifest::rotation(
        (0..axes)
            .map(|_| sample::rotation(&mut rng, blocks).angles().to_vec())
            .collect(),
        seed,
    )
    .unwrap()
}

#[test]
fn compose_single_identity_and_fold() {
    let w = Work::new();
    let m = rotation_manifest(1, 2, 2);
    let mp = w.manifest("m.toml", &m);
    let basis = m.basis().unwrap();
    let mut rng = sample::rng(2);
    let mk = |rng: &mut sample::SeededRng, n: i64| {
        Element::new(sample::vector(rng, 4), vec![n, 3], &basis).unwrap()
    };
    let (x, y, z) = (mk(&mut rng, 2), mk(&mut rng, -1), mk(&mut rng, 4));

    let one = w.elements("one.toml", std::slice::from_ref(&x));
    let out = ok(&axiscomp(&[
        "compose",
        "--manifest",
        s(&mp),
        "--elements",
        s(&one),
        "--axis",
        "0",
    ]));
    assert_eq!(elements_out(&out, &m), vec![x.clone()]);

    let id = Element::new(vec![0.0; 4], vec![0, 3], &basis).unwrap();
    let pair = w.elements("pair.toml", &[id, x.clone()]);
    let out = ok(&axiscomp(&[
        "compose",
        "--manifest",
        s(&mp),
        "--elements",
        s(&pair),
        "--axis",
        "0",
    ]));
    assert_eq!(elements_out(&out, &m), vec![x.clone()]);

    let three = w.elements("three.toml", &[x.clone(), y.clone(), z.clone()]);
    let out = ok(&axiscomp(&[
        "compose",
        "--manifest",
        s(&mp),
        "--elements",
        s(&three),
        "--axis",
        "0",
    ]));
    let got = &elements_out(&out, &m)[0];
    let yz = y.compose_axis(&z, 0).unwrap();
    let expect = x.compose_axis(&yz, 0).unwrap();
    assert_eq!(got.powers(), expect.powers());
    assert!(max_abs_diff(got.content(), expect.content()) < 1e-12);
}

#[test]
fn compose_axis_mismatch_exits_2() {
    let w = Work::new();
    let m = rotation_manifest(3, 2, 1);
    let mp = w.manifest("m.toml", &m);
    let basis = m.basis().unwrap();
    let x = Element::new(vec![1.0, 0.0], vec![1, 1], &basis).unwrap();
    let y = Element::new(vec![0.0, 1.0], vec![1, 2], &basis).unwrap();
    let e = w.elements("e.toml", &[x, y]);
    let out = axiscomp(&[
        "compose",
        "--manifest",
        s(&mp),
        "--elements",
        s(&e),
        "--axis",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("powers differ on axis 1"));
}

#[test]
fn scan_prefix_and_grid() {
    let w = Work::new();
    let m = rotation_manifest(4, 1, 3);
    let mp = w.manifest("m.toml", &m);

    let single = Signal::from_rows(&[[0.5, -1.0, 2.0, 3.0, 0.25, 1e-9]]).unwrap();
    let sp = w.signal("one.dnmc", &single);
    let out = w.path("e.dnmc");
    ok(&axiscomp(&[
        "scan",
        "--manifest",
        s(&mp),
        "--signal",
        s(&sp),
        "--out",
        s(&out),
    ]));
    assert_eq!(TensorFile::read(&out).unwrap().data, single.data());

    let long = sample::signal(&mut sample::rng(5), vec![1024], 6);
    let lp = w.signal("long.dnmc", &long);
    let (a, b) = (w.path("a.dnmc"), w.path("b.dnmc"));
    ok(&axiscomp(&[
        "prefix",
        "--manifest",
        s(&mp),
        "--signal",
        s(&lp),
        "--out",
        s(&a),
    ]));
    ok(&axiscomp(&[
        "prefix",
        "--manifest",
        s(&mp),
        "--signal",
        s(&lp),
        "--parallel",
        "--chunk",
        "37",
        "--out",
        s(&b),
    ]));
    let (ta, tb) = (TensorFile::read(&a).unwrap(), TensorFile::read(&b).unwrap());
    assert_eq!(ta.dims, vec![1024, 6]);
    assert!(max_abs_diff(&ta.data, &tb.data) < 1e-9);

    let seq = ok(&axiscomp(&[
        "scan",
        "--manifest",
        s(&mp),
        "--signal",
        s(&lp),
    ]));
    let par = ok(&axiscomp(&[
        "scan",
        "--manifest",
        s(&mp),
        "--signal",
        s(&lp),
        "--parallel",
        "--chunk",
        "100",
    ]));
    let parse = |t: &str| {
        t.split_whitespace()
            .map(|v| v.parse::<f64>().unwrap())
            .collect::<Vec<_>>()
    };
    assert!(max_abs_diff(&parse(&seq), &parse(&par)) < 1e-9);

    let identity = Manifest::rotation(vec![vec![0.0; 2], vec![0.0; 2]], 0).unwrap();
    let ip = w.manifest("id.toml", &identity);
    let cells = sample::signal(&mut sample::rng(6), vec![3, 4], 4);
    let gp = w.signal("grid.dnmc", &cells);
    let text = ok(&axiscomp(&[
        "grid",
        "--manifest",
        s(&ip),
        "--signal",
        s(&gp),
    ]));
    let mut sum = vec![0.0; 4];
    for r in cells.rows() {
        sum.iter_mut().zip(r).for_each(|(a, b)| *a += b);
    }
    assert!(max_abs_diff(&parse(&text), &sum) < 1e-12);
}

#[test]
fn mrep_outputs() {
    let w = Work::new();
    let m = rotation_manifest(7, 1, 2);
    let mp = w.manifest("m.toml", &m);

    let zero = Signal::zeros(vec![10], 4).unwrap();
    let zp = w.signal("zero.dnmc", &zero);
    let text = ok(&axiscomp(&[
        "mrep",
        "--manifest",
        s(&mp),
        "--signal",
        s(&zp),
        "--window",
        "3",
    ]));
    assert!(text
        .split_whitespace()
        .all(|v| v.parse::<f64>().unwrap() == 0.0));

    // Same content at two placements with full zero margins.
    let content = sample::signal(&mut sample::rng(8), vec![5], 4);
    let place = |offset: usize| {
        let mut sig = Signal::zeros(vec![16], 4).unwrap();
        for i in 0..5 {
            sig.row_mut(2 + offset + i).copy_from_slice(content.row(i));
        }
        sig
    };
    let (pa, pb) = (
        w.signal("pa.dnmc", &place(0)),
        w.signal("pb.dnmc", &place(4)),
    );
    let (oa, ob) = (w.path("oa.dnmc"), w.path("ob.dnmc"));
    ok(&axiscomp(&[
        "mrep",
        "--manifest",
        s(&mp),
        "--signal",
        s(&pa),
        "--window",
        "3",
        "--out",
        s(&oa),
    ]));
    ok(&axiscomp(&[
        "mrep",
        "--manifest",
        s(&mp),
        "--signal",
        s(&pb),
        "--window",
        "3",
        "--out",
        s(&ob),
    ]));
    assert_eq!(std::fs::read(&oa).unwrap(), std::fs::read(&ob).unwrap());

    // m = N: a single window, the magnitudes of its embedding.
    let r = m.rotations().unwrap().remove(0);
    let mut emb = content.row(0).to_vec();
    for i in 1..5 {
        let v = r.pow(i as i64).apply(content.row(i)).unwrap();
        emb.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    let cp = w.signal("content.dnmc", &content);
    let text = ok(&axiscomp(&[
        "mrep",
        "--manifest",
        s(&mp),
        "--signal",
        s(&cp),
        "--window",
        "5",
    ]));
    let got: Vec<f64> = text
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(max_abs_diff(&got, &magnitude_vector(&emb).0) < 1e-12);
}

#[test]
fn align_and_concat() {
    let w = Work::new();
    let m = rotation_manifest(9, 2, 2);
    let mp = w.manifest("m.toml", &m);
    let y = sample::vector(&mut sample::rng(10), 4);
    let yp = w.tensor("y.dnmc", &TensorFile::vector(&y));
    let out = ok(&axiscomp(&[
        "align",
        "--manifest",
        s(&mp),
        "--x",
        s(&yp),
        "--y",
        s(&yp),
        "--axis",
        "0",
        "--range",
        "-5..5",
    ]));
    assert!(out.starts_with("align best_shift=0 "), "{out}");

    let basis = m.basis().unwrap();
    let x = basis.combined(&[3, -2]).unwrap().apply(&y).unwrap();
    let xp = w.tensor("x.dnmc", &TensorFile::vector(&x));
    let out = ok(&axiscomp(&[
        "align",
        "--manifest",
        s(&mp),
        "--x",
        s(&xp),
        "--y",
        s(&yp),
        "--axis",
        "0",
        "--range",
        "-4..4",
        "--axis",
        "1",
        "--range",
        "-4..=4",
    ]));
    assert!(out.starts_with("align best_shift=3,-2 "), "{out}");

    let empty = axiscomp(&[
        "align",
        "--manifest",
        s(&mp),
        "--x",
        s(&xp),
        "--y",
        s(&yp),
        "--axis",
        "0",
        "--range",
        "3..1",
    ]);
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&empty.stderr).contains("empty shift range"));

    // Two images of widths N and M, same height H: the result has width N + M.
    let (n, mm, h) = (5, 7, 4);
    let xa = Element::new(sample::vector(&mut sample::rng(11), 4), vec![n, h], &basis).unwrap();
    let xb = Element::new(sample::vector(&mut sample::rng(12), 4), vec![mm, h], &basis).unwrap();
    let ep = w.elements("imgs.toml", &[xa.clone(), xb.clone()]);
    let out = ok(&axiscomp(&[
        "concat",
        "--manifest",
        s(&mp),
        "--elements",
        s(&ep),
        "--axis",
        "0",
    ]));
    let got = &elements_out(&out, &m)[0];
    assert_eq!(got.powers(), &[n + mm, h]);
    assert!(max_abs_diff(got.content(), xa.compose_axis(&xb, 0).unwrap().content()) < 1e-12);
}

#[test]
fn attend_and_ssm() {
    let w = Work::new();
    let mut rng = sample::rng(13);
    let one = |rng: &mut sample::SeededRng| sample::signal(rng, vec![1], 4);
    let (q, k, v) = (one(&mut rng), one(&mut rng), one(&mut rng));
    let (qp, kp, vp) = (
        w.signal("q.dnmc", &q),
        w.signal("k.dnmc", &k),
        w.signal("v.dnmc", &v),
    );
    let o = w.path("o.dnmc");
    ok(&axiscomp(&[
        "attend",
        "--q",
        s(&qp),
        "--k",
        s(&kp),
        "--v",
        s(&vp),
        "--tied-angle",
        "0.7",
        "--out",
        s(&o),
    ]));
    assert_eq!(TensorFile::read(&o).unwrap().data, v.data());

    let many = |rng: &mut sample::SeededRng| sample::signal(rng, vec![6], 4);
    let (q, k, v) = (many(&mut rng), many(&mut rng), many(&mut rng));
    let (qp, kp, vp) = (
        w.signal("q6.dnmc", &q),
        w.signal("k6.dnmc", &k),
        w.signal("v6.dnmc", &v),
    );
    let reference = vanilla_attention(&AttentionInputs::new(q, k, v).unwrap(), true).unwrap();
    let (o, a) = (w.path("o6.dnmc"), w.path("a6.dnmc"));
    ok(&axiscomp(&[
        "attend",
        "--q",
        s(&qp),
        "--k",
        s(&kp),
        "--v",
        s(&vp),
        "--tied-angle",
        "0",
        "--causal",
        "--out",
        s(&o),
        "--alpha-out",
        s(&a),
    ]));
    assert!(max_abs_diff(&TensorFile::read(&o).unwrap().data, reference.o.data()) < 1e-12);
    assert_eq!(TensorFile::read(&a).unwrap().dims, vec![6, 6]);

    let coords = TensorFile::new(
        vec![6, 2],
        vec![0.0, 0.0, 0.0, 1.0, 0.0, 2.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0],
    )
    .unwrap();
    let cp = w.tensor("coords.dnmc", &coords);
    let mp = w.manifest("m.toml", &rotation_manifest(14, 2, 2));
    ok(&axiscomp(&[
        "attend",
        "--q",
        s(&qp),
        "--k",
        s(&kp),
        "--v",
        s(&vp),
        "--manifest",
        s(&mp),
        "--coords",
        s(&cp),
    ]));

    let out = ok(&axiscomp(&[
        "ssm", "--random", "3", "--len", "16", "--state", "8",
    ]));
    let line = out.lines().last().unwrap();
    let residual: f64 = line.rsplit('=').next().unwrap().parse().unwrap();
    assert!(residual < 1e-9, "{line}");
}

#[test]
fn check_exit_codes_and_determinism() {
    let pass = axiscomp(&[
        "check",
        "--suite",
        "interchange",
        "--backend",
        "rotation",
        "--seed",
        "4",
    ]);
    assert_eq!(pass.status.code(), Some(0));
    let dense = axiscomp(&[
        "check",
        "--suite",
        "interchange",
        "--backend",
        "dense",
        "--seed",
        "4",
    ]);
    let text = ok(&dense);
    assert!(text.contains("law violated as expected"));
    assert!(text.contains("check suite=interchange") && text.contains("pass=true"));
    let again = axiscomp(&[
        "check",
        "--suite",
        "interchange",
        "--backend",
        "dense",
        "--seed",
        "4",
    ]);
    assert_eq!(dense.stdout, again.stdout);

    let unknown = axiscomp(&["check", "--suite", "bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    let bad_flag = axiscomp(&["check", "--backend", "quantum"]);
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn prefix_outputs_are_byte_identical_across_runs() {
    let w = Work::new();
    let mp = w.manifest("m.toml", &rotation_manifest(15, 1, 4));
    let sp = w.signal(
        "s.dnmc",
        &sample::signal(&mut sample::rng(16), vec![500], 8),
    );
    let (a, b) = (w.path("a.dnmc"), w.path("b.dnmc"));
    for p in [&a, &b] {
        ok(&axiscomp(&[
            "prefix",
            "--manifest",
            s(&mp),
            "--signal",
            s(&sp),
            "--parallel",
            "--chunk",
            "7",
            "--out",
            s(p),
        ]));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn bench_usage_errors_and_schema() {
    assert_eq!(axiscomp(&["bench", "--sizes", ""]).status.code(), Some(2));
    assert_eq!(axiscomp(&["bench", "--sizes", "3"]).status.code(), Some(2));
    let out = ok(&axiscomp(&[
        "bench",
        "--sizes",
        "4,8",
        "--repeats",
        "1",
        "--len",
        "16",
        "--scan-len",
        "64",
        "--scan-dim",
        "4",
    ]));
    assert!(out.contains("bench kind=scan backend=rotation dim=4"));
    assert!(out.contains("bench kind=fit"));
    assert!(out.contains("bench kind=prefix len=64"));
}

#[test]
fn malformed_inputs_exit_2() {
    let w = Work::new();
    let bad = w.path("bad.dnmc");
    std::fs::write(&bad, b"NOPE").unwrap();
    let mp = w.manifest("m.toml", &rotation_manifest(17, 1, 1));
    let out = axiscomp(&["scan", "--manifest", s(&mp), "--signal", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));

    let wrong = w.path("wrong.toml");
    std::fs::write(
        &wrong,
        "schema_version = \"9\"\ndim = 2\naxes = 1\nbackend = \"rotation\"\n",
    )
    .unwrap();
    let sp = w.signal("s.dnmc", &Signal::zeros(vec![2], 2).unwrap());
    let out = axiscomp(&["scan", "--manifest", s(&wrong), "--signal", s(&sp)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));

    let r = BlockRotation::from_angles(vec![0.1]).unwrap();
    assert_eq!(r.dim(), 2);
    assert_eq!(axiscomp(&[]).status.code(), Some(2));
}
