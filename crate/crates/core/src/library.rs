//! Hand-crafted channel metrics (the seed population) and published evolved
//! functions, encoded as expression trees.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::ir::{parse, ExprTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Soap,
    Evolved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedFunction {
    pub name: &'static str,
    pub tree: ExprTree,
    pub family: Family,
}

const FISHER: &str = "(div (sq (sub (mean_g F+) (mean_g F-))) (add (var_g F+) (var_g F-)))";

fn soap_sources() -> Vec<(&'static str, String)> {
    let centered = "(sub F (mean_s F))";
    let class_shift = "(sub (mean_s F+) (mean_s F))";
    let cross = "(div (sum_g (rbf F+ F-)) (mul (count_s F+) (count_s F-)))";
    vec![
        ("l1_norm", "(sum_g (abs W_I))".into()),
        ("l2_norm", "(sqrt (sum_g (sq W_I)))".into()),
        ("bn_scale", "(abs (slice B))".into()),
        (
            "geometric_median",
            "(sqrt (sum_g (sq (sub W_I (geo W)))))".into(),
        ),
        (
            "discriminant_information",
            format!(
                "(mul (count_s F+) (matmul (matmul (tran {class_shift}) \
                 (inv (ridge (matmul (tran {centered}) {centered})))) {class_shift}))"
            ),
        ),
        (
            "mmd",
            format!(
                "(sub (sub (add (div (sum_g (rbf F+ F+)) (sq (count_s F+))) \
                 (div (sum_g (rbf F- F-)) (sq (count_s F-)))) {cross}) {cross})"
            ),
        ),
        (
            "abs_snr",
            "(div (abs (sub (mean_g F+) (mean_g F-))) (add (std_g F+) (std_g F-)))".into(),
        ),
        (
            "t_test",
            "(div (abs (sub (mean_g F+) (mean_g F-))) \
             (sqrt (add (div (var_g F+) (count_s F+)) (div (var_g F-) (count_s F-)))))"
                .into(),
        ),
        ("fisher_ratio", FISHER.into()),
        (
            "symmetric_divergence",
            format!("(add (add (div (var_g F+) (var_g F-)) (div (var_g F-) (var_g F+))) {FISHER})"),
        ),
    ]
}

fn evolved_sources() -> Vec<(&'static str, String)> {
    let spread = "(add (var_g F+) (var_g F-))";
    let xi_star_vec = "(add (mul (mul (std_g (mean_s F)) (var_g F-)) (mean_s F)) \
                       (sub (var_g F+) (mean_g F-)))";
    let xi_1_vec = "(sub (mean_s F) (var_g F-))";
    vec![
        (
            "xi_star",
            format!(
                "(add (add (div (var_g F-) (var_g F+)) (div (var_g F+) (var_g F-))) \
                 (div (dot {xi_star_vec} {xi_star_vec}) {spread}))"
            ),
        ),
        (
            "xi_imagenet",
            "(div (sq (sq (div (var_g (mean_s F+)) (mul (std_g (tr F+)) (mean_g F-))))) \
             (var_g (sqrt F)))"
                .into(),
        ),
        (
            "xi_1",
            format!("(add (div (dot {xi_1_vec} {xi_1_vec}) {spread}) (var_g F+))"),
        ),
        ("xi_2", "(var_g F+)".into()),
        ("xi_3", "(var_g W_I)".into()),
    ]
}

fn build(sources: Vec<(&'static str, String)>, family: Family) -> Vec<NamedFunction> {
    sources
        .into_iter()
        .map(|(name, src)| NamedFunction {
            name,
            tree: parse(&src).unwrap_or_else(|e| panic!("library function {name}: {e}")),
            family,
        })
        .collect()
}

/// The ten hand-crafted metrics that seed and refresh the population.
pub fn build_soap() -> Vec<NamedFunction> {
    build(soap_sources(), Family::Soap)
}

/// The five published evolved functions.
pub fn build_evolved() -> Vec<NamedFunction> {
    build(evolved_sources(), Family::Evolved)
}

/// SOAP followed by the evolved functions.
pub fn library() -> Vec<NamedFunction> {
    let mut all = build_soap();
    all.extend(build_evolved());
    all
}

pub fn by_name(name: &str) -> Option<NamedFunction> {
    library().into_iter().find(|f| f.name == name)
}

/// Writes `<name>.fn` for every library function and returns the paths.
pub fn export(dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    library()
        .into_iter()
        .map(|f| {
            let path = dir.join(format!("{}.fn", f.name));
            fs::write(&path, format!("# {}\n{}\n", f.name, f.tree))?;
            Ok(path)
        })
        .collect()
}
