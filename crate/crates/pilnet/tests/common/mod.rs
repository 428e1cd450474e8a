#![allow(dead_code)]

pub mod critical;
pub mod enumerate;
pub mod generate;

use std::path::PathBuf;

use pilnet::calculus::Derivation;
use pilnet::structure::PreStructure;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn files(sub: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> =
        std::fs::read_dir(corpus_dir().join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
    out.retain(|p| p.extension().is_some_and(|x| x == "json"));
    out.sort();
    out
}

fn stem(p: &std::path::Path) -> String {
    p.file_name().unwrap().to_string_lossy().split('.').next().unwrap().to_string()
}

pub fn derivations() -> Vec<(String, Derivation)> {
    files("derivations")
        .into_iter()
        .map(|f| (stem(&f), Derivation::from_json_str(&std::fs::read_to_string(&f).unwrap()).unwrap()))
        .collect()
}

pub fn derivation(name: &str) -> Derivation {
    derivations().into_iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("no derivation {name}")).1
}

pub fn nets() -> Vec<(String, PreStructure)> {
    files("nets")
        .into_iter()
        .map(|f| (stem(&f), PreStructure::from_json_str(&std::fs::read_to_string(&f).unwrap()).unwrap()))
        .collect()
}

pub fn net(name: &str) -> PreStructure {
    nets().into_iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("no net {name}")).1
}
