//! Flat key-value run configuration with an embedded field-DSL block.
//!
//! The format is line based: `key = value` pairs, `#` comments, and one
//! optional `field { ... }` block holding the curvature-field DSL. Parsing and
//! serialization round-trip, so a run can be archived from its config file.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{parse_field_dsl, serialize_field_dsl, CurvatureField};
use crate::melnikov::ScanBox;
use crate::reduction::SolveMode;
use crate::sphere::{MAX_DEGREE, MIN_DEGREE};

use super::scenarios::Scenario;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub degree: usize,
    pub h0: f64,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub p: Vector3<f64>,
    pub scan_box: ScanBox,
    pub solver_tol: f64,
    pub quad_tol: f64,
    pub eps_ceiling: f64,
    pub pad_factor: f64,
    pub gamma_scan_n: usize,
    pub phi_scan_n: usize,
    pub mode: SolveMode,
    pub threads: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub verbose: bool,
    pub scenario: Option<Scenario>,
    pub h0_list: Vec<f64>,
    pub field: CurvatureField,
    /// DSL text the field was parsed from (canonicalized on serialize).
    pub field_dsl: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let field_dsl = "1 gaussian a=1 c=0,0,0 s=1\n".to_string();
        let field = parse_field_dsl(&field_dsl, 0).expect("default field parses");
        RunConfig {
            degree: 16,
            h0: 1.0,
            eps: 1e-2,
            eps_list: vec![1e-2, 5e-3, 2.5e-3],
            p: Vector3::zeros(),
            scan_box: ScanBox::cube(5.0),
            solver_tol: 1e-10,
            quad_tol: 1e-9,
            eps_ceiling: 0.2,
            pad_factor: 1.5,
            gamma_scan_n: 17,
            phi_scan_n: 9,
            mode: SolveMode::Picard,
            threads: 1,
            seed: 0,
            out: PathBuf::from("out"),
            verbose: false,
            scenario: None,
            h0_list: vec![1.0, 2.0, 4.0],
            field,
            field_dsl,
        }
    }
}

fn parse_floats(line: usize, key: &str, value: &str, n: Option<usize>) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> =
        value.split_whitespace().map(|t| t.parse::<f64>()).collect();
    let vals = vals.map_err(|_| Error::ConfigParse {
        line,
        msg: format!("bad number list for `{key}`: `{value}`"),
    })?;
    if let Some(n) = n {
        if vals.len() != n {
            return Err(Error::ConfigParse {
                line,
                msg: format!("`{key}` needs {n} numbers, got {}", vals.len()),
            });
        }
    }
    Ok(vals)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut field_set = false;
        let lines: Vec<&str> = text.lines().collect();
        let mut i = 0;
        while i < lines.len() {
            let line_no = i + 1;
            let line = lines[i].trim();
            i += 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "field {" || line == "field{" {
                let start = i;
                let mut block = String::new();
                let mut closed = false;
                while i < lines.len() {
                    let inner = lines[i].trim();
                    i += 1;
                    if inner == "}" {
                        closed = true;
                        break;
                    }
                    block.push_str(inner);
                    block.push('\n');
                }
                if !closed {
                    return Err(Error::ConfigParse {
                        line: line_no,
                        msg: "unterminated field block".into(),
                    });
                }
                cfg.field = parse_field_dsl(&block, start)?;
                cfg.field_dsl = serialize_field_dsl(&cfg.field).ok_or_else(|| {
                    Error::ConfigParse {
                        line: line_no,
                        msg: "field block not expressible in the DSL".into(),
                    }
                })?;
                field_set = true;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let bad_num = |k: &str| Error::ConfigParse {
                line: line_no,
                msg: format!("bad number for `{k}`: `{value}`"),
            };
            match key.as_str() {
                "degree" => cfg.degree = value.parse().map_err(|_| bad_num("degree"))?,
                "h0" => cfg.h0 = value.parse().map_err(|_| bad_num("h0"))?,
                "eps" => cfg.eps = value.parse().map_err(|_| bad_num("eps"))?,
                "eps_list" => cfg.eps_list = parse_floats(line_no, "eps_list", value, None)?,
                "h0_list" => cfg.h0_list = parse_floats(line_no, "h0_list", value, None)?,
                "p" => {
                    let v = parse_floats(line_no, "p", value, Some(3))?;
                    cfg.p = Vector3::new(v[0], v[1], v[2]);
                }
                "box" => {
                    let v = parse_floats(line_no, "box", value, Some(6))?;
                    cfg.scan_box = ScanBox::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
                        .map_err(|e| Error::ConfigParse {
                            line: line_no,
                            msg: e.to_string(),
                        })?;
                }
                "solver_tol" => cfg.solver_tol = value.parse().map_err(|_| bad_num("solver_tol"))?,
                "quad_tol" => cfg.quad_tol = value.parse().map_err(|_| bad_num("quad_tol"))?,
                "eps_ceiling" => {
                    cfg.eps_ceiling = value.parse().map_err(|_| bad_num("eps_ceiling"))?
                }
                "pad_factor" => cfg.pad_factor = value.parse().map_err(|_| bad_num("pad_factor"))?,
                "gamma_scan_n" => {
                    cfg.gamma_scan_n = value.parse().map_err(|_| bad_num("gamma_scan_n"))?
                }
                "phi_scan_n" => {
                    cfg.phi_scan_n = value.parse().map_err(|_| bad_num("phi_scan_n"))?
                }
                "threads" => cfg.threads = value.parse().map_err(|_| bad_num("threads"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad_num("seed"))?,
                "out" => cfg.out = PathBuf::from(value),
                "verbose" => {
                    cfg.verbose = value.parse().map_err(|_| Error::ConfigParse {
                        line: line_no,
                        msg: format!("bad boolean for `verbose`: `{value}`"),
                    })?
                }
                "mode" => {
                    cfg.mode = match value.to_ascii_lowercase().as_str() {
                        "picard" => SolveMode::Picard,
                        "newton" => SolveMode::Newton,
                        other => {
                            return Err(Error::ConfigParse {
                                line: line_no,
                                msg: format!("unknown mode `{other}` (picard|newton)"),
                            })
                        }
                    }
                }
                "scenario" => {
                    cfg.scenario =
                        Some(Scenario::from_name(value).map_err(|e| Error::ConfigParse {
                            line: line_no,
                            msg: e.to_string(),
                        })?)
                }
                other => {
                    return Err(Error::ConfigParse {
                        line: line_no,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        if !field_set {
            cfg.field_dsl = serialize_field_dsl(&cfg.field).expect("default field serializes");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Preconditions shared by every command.
    pub fn validate(&self) -> Result<()> {
        if !(MIN_DEGREE..=MAX_DEGREE).contains(&self.degree) {
            return Err(Error::DegreeOutOfRange(self.degree, MIN_DEGREE, MAX_DEGREE));
        }
        if self.h0 == 0.0 {
            return Err(Error::InvalidParameter("h0 must be nonzero".into()));
        }
        if !(self.solver_tol > 0.0 && self.quad_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "solver_tol and quad_tol must be positive".into(),
            ));
        }
        if !(self.pad_factor >= 1.0) {
            return Err(Error::InvalidParameter(
                "pad_factor must be at least 1".into(),
            ));
        }
        if self.gamma_scan_n < 2 || self.phi_scan_n < 2 {
            return Err(Error::InvalidParameter(
                "scan resolutions must be at least 2".into(),
            ));
        }
        if self.eps_list.is_empty() {
            return Err(Error::InvalidParameter("eps_list must be nonempty".into()));
        }
        Ok(())
    }

    /// Canonical text form; `parse(serialize(cfg))` reproduces the config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("degree = {}\n", self.degree));
        out.push_str(&format!("h0 = {}\n", self.h0));
        out.push_str(&format!("eps = {}\n", self.eps));
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&format!("eps_list = {}\n", list(&self.eps_list)));
        out.push_str(&format!("h0_list = {}\n", list(&self.h0_list)));
        out.push_str(&format!("p = {} {} {}\n", self.p.x, self.p.y, self.p.z));
        out.push_str(&format!(
            "box = {} {} {} {} {} {}\n",
            self.scan_box.lo[0],
            self.scan_box.lo[1],
            self.scan_box.lo[2],
            self.scan_box.hi[0],
            self.scan_box.hi[1],
            self.scan_box.hi[2]
        ));
        out.push_str(&format!("solver_tol = {}\n", self.solver_tol));
        out.push_str(&format!("quad_tol = {}\n", self.quad_tol));
        out.push_str(&format!("eps_ceiling = {}\n", self.eps_ceiling));
        out.push_str(&format!("pad_factor = {}\n", self.pad_factor));
        out.push_str(&format!("gamma_scan_n = {}\n", self.gamma_scan_n));
        out.push_str(&format!("phi_scan_n = {}\n", self.phi_scan_n));
        out.push_str(&format!(
            "mode = {}\n",
            match self.mode {
                SolveMode::Picard => "picard",
                SolveMode::Newton => "newton",
            }
        ));
        out.push_str(&format!("threads = {}\n", self.threads));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("out = {}\n", self.out.display()));
        out.push_str(&format!("verbose = {}\n", self.verbose));
        if let Some(s) = self.scenario {
            out.push_str(&format!("scenario = {}\n", s.name()));
        }
        out.push_str("field {\n");
        for line in self.field_dsl.lines() {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("}\n");
        out
    }

    /// Hash of the canonical serialization (recorded in run manifests).
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.serialize().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.serialize();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(text, back.serialize());
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn parses_full_config() {
        let text = "\
# experiment
degree = 12
h0 = 2
eps = 0.005
eps_list = 0.01 0.005
p = 1 0 -1
box = -4 -4 -4 4 4 4
threads = 4
mode = newton
scenario = thm3
out = runs/a
field {
1 gaussian a=1 c=3,0,0 s=1
-1 gaussian a=1 c=-3,0,0 s=1
}
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.degree, 12);
        assert_eq!(cfg.h0, 2.0);
        assert_eq!(cfg.mode, SolveMode::Newton);
        assert_eq!(cfg.scenario, Some(Scenario::Thm3));
        assert_eq!(cfg.threads, 4);
        let back = RunConfig::parse(&cfg.serialize()).unwrap();
        assert_eq!(cfg.serialize(), back.serialize());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "degree = 12\nbogus_key = 3\n";
        match RunConfig::parse(text) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "degree = twelve\n";
        match RunConfig::parse(text) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "field {\n1 gaussian a=1 c=0,0 s=1\n}\n";
        match RunConfig::parse(text) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        // Preconditions checked at load.
        assert!(RunConfig::parse("degree = 2\n").is_err());
        assert!(RunConfig::parse("h0 = 0\n").is_err());
        assert!(RunConfig::parse("box = 1 0 0 0 0 0\n").is_err());
    }
}
