//! Versioned binary container for ensembles and datasets.
//!
//! All integers are little-endian; `usize` values are stored as `u64` and
//! floats as their IEEE-754 bit patterns, so a round trip is bit-exact.
//!
//! ```text
//! file     := magic "HETPOOL\0" | version u16 (= 1) | payload-type u8 | payload | sha256 [32]
//! payload-type 1 = ensemble, 2 = dataset
//! string   := len u64 | utf-8 bytes
//! vec<T>   := len u64 | T*
//! ensemble := kind u8 | n_features u64 | n_classes u64 | master_seed u64
//!             | fingerprint string | batch_params vec<hyper> | batch_sizes vec<u64>
//!             | warnings vec<string> | has_scaler u8 [mean vec<f64> | scale vec<f64> | degenerate vec<u64>]
//!             | models vec<model>
//! hyper    := 1 c f64 gamma f64 | 2 hidden u64 | 3 mtry u64
//! model    := hyper | converged u8 | with_replacement u8 | indices vec<u64> | params
//! params   := 1 svm | 2 mlp | 3 tree
//! svm      := gamma f64 | c f64 | n_features u64 | n_classes u64 | converged u8 | machines vec<machine>
//! machine  := 0 class u64 | 1 positive u64 | negative u64 | support vec<f64> | coef vec<f64> | rho f64
//! mlp      := inputs u64 | hidden u64 | outputs u64 | weights vec<f64>
//! tree     := nodes vec<node>;  node := 0 class u64 | 1 feature u64 | threshold f64 | left u64 | right u64
//! dataset  := n u64 | d u64 | features vec<f64> | labels vec<u64> | class_names vec<string> | feature_names vec<string>
//! ```
//!
//! The trailing digest covers every preceding byte. Members of an ensemble
//! share the ensemble's scaler.

use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::data::{Dataset, IndexSample};
use crate::error::{Error, Result};
use crate::homogeneous::HomogeneousEnsemble;
use crate::learners::mlp::Network;
use crate::learners::svm::{Machine, SvmModel};
use crate::learners::tree::{DecisionTree, Node};
use crate::learners::{BaseModel, HyperParams, ModelKind, ModelParams, Standardizer};

pub const MAGIC: &[u8; 8] = b"HETPOOL\0";
pub const VERSION: u16 = 1;
const PAYLOAD_ENSEMBLE: u8 = 1;
const PAYLOAD_DATASET: u8 = 2;
const DIGEST_LEN: usize = 32;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bool(&mut self, v: bool) {
        self.u8(u8::from(v));
    }
    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.usize(x));
    }
    fn strs(&mut self, v: &[String]) {
        self.usize(v.len());
        v.iter().for_each(|s| self.str(s));
    }

    fn header(&mut self, payload: u8) {
        self.buf.extend_from_slice(MAGIC);
        self.u16(VERSION);
        self.u8(payload);
    }

    fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }

    fn hyper(&mut self, hp: &HyperParams) {
        match *hp {
            HyperParams::Svm { c, gamma } => {
                self.u8(1);
                self.f64(c);
                self.f64(gamma);
            }
            HyperParams::Mlp { hidden } => {
                self.u8(2);
                self.usize(hidden);
            }
            HyperParams::Tree { mtry } => {
                self.u8(3);
                self.usize(mtry);
            }
        }
    }

    fn model(&mut self, m: &BaseModel) {
        self.hyper(&m.hyperparams);
        self.bool(m.converged);
        self.bool(m.train_indices.with_replacement);
        self.usizes(&m.train_indices.indices);
        match &m.params {
            ModelParams::Svm(s) => {
                self.u8(1);
                self.f64(s.gamma);
                self.f64(s.c);
                self.usize(s.n_features);
                self.usize(s.n_classes);
                self.bool(s.converged);
                self.usize(s.machines.len());
                for machine in &s.machines {
                    match machine {
                        Machine::Constant { class } => {
                            self.u8(0);
                            self.usize(*class);
                        }
                        Machine::Kernel {
                            positive,
                            negative,
                            support,
                            coef,
                            rho,
                        } => {
                            self.u8(1);
                            self.usize(*positive);
                            self.usize(*negative);
                            self.f64s(support);
                            self.f64s(coef);
                            self.f64(*rho);
                        }
                    }
                }
            }
            ModelParams::Mlp(n) => {
                self.u8(2);
                self.usize(n.inputs);
                self.usize(n.hidden);
                self.usize(n.outputs);
                self.f64s(&n.weights);
            }
            ModelParams::Tree(t) => {
                self.u8(3);
                self.usize(t.nodes.len());
                for node in &t.nodes {
                    match *node {
                        Node::Leaf { class } => {
                            self.u8(0);
                            self.usize(class);
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            self.u8(1);
                            self.usize(feature);
                            self.f64(threshold);
                            self.usize(left);
                            self.usize(right);
                        }
                    }
                }
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Format(what.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("integer out of range"))
    }
    /// A length prefix, bounded by the bytes left so corrupt input cannot
    /// trigger a huge allocation.
    fn len(&mut self, min_item: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(corrupt("length prefix exceeds data"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(corrupt(format!("bad boolean byte {b}"))),
        }
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }
    fn strs(&mut self) -> Result<Vec<String>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.str()).collect()
    }

    fn open(buf: &'a [u8], payload: u8) -> Result<Self> {
        if buf.len() < MAGIC.len() + 3 + DIGEST_LEN {
            return Err(corrupt("file too short"));
        }
        let (body, digest) = buf.split_at(buf.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(corrupt("not a hetpool container"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported container version {version}")));
        }
        let found = r.u8()?;
        if found != payload {
            return Err(corrupt(format!("expected payload type {payload}, found {found}")));
        }
        Ok(r)
    }

    fn done(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(corrupt("trailing bytes after payload"))
        }
    }

    fn hyper(&mut self) -> Result<HyperParams> {
        Ok(match self.u8()? {
            1 => HyperParams::Svm {
                c: self.f64()?,
                gamma: self.f64()?,
            },
            2 => HyperParams::Mlp { hidden: self.usize()? },
            3 => HyperParams::Tree { mtry: self.usize()? },
            t => return Err(corrupt(format!("bad hyperparameter tag {t}"))),
        })
    }

    fn model(&mut self, n_features: usize, n_classes: usize, scaler: &Option<Arc<Standardizer>>) -> Result<BaseModel> {
        let hyperparams = self.hyper()?;
        let converged = self.bool()?;
        let with_replacement = self.bool()?;
        let indices = self.usizes()?;
        let params = match self.u8()? {
            1 => {
                let (gamma, c) = (self.f64()?, self.f64()?);
                let (nf, nc) = (self.usize()?, self.usize()?);
                let svm_converged = self.bool()?;
                let count = self.len(9)?;
                let mut machines = Vec::with_capacity(count);
                for _ in 0..count {
                    machines.push(match self.u8()? {
                        0 => Machine::Constant { class: self.usize()? },
                        1 => Machine::Kernel {
                            positive: self.usize()?,
                            negative: self.usize()?,
                            support: self.f64s()?,
                            coef: self.f64s()?,
                            rho: self.f64()?,
                        },
                        t => return Err(corrupt(format!("bad machine tag {t}"))),
                    });
                }
                ModelParams::Svm(SvmModel {
                    gamma,
                    c,
                    n_features: nf,
                    n_classes: nc,
                    machines,
                    converged: svm_converged,
                })
            }
            2 => ModelParams::Mlp(Network {
                inputs: self.usize()?,
                hidden: self.usize()?,
                outputs: self.usize()?,
                weights: self.f64s()?,
            }),
            3 => {
                let count = self.len(9)?;
                let mut nodes = Vec::with_capacity(count);
                for _ in 0..count {
                    nodes.push(match self.u8()? {
                        0 => Node::Leaf { class: self.usize()? },
                        1 => Node::Split {
                            feature: self.usize()?,
                            threshold: self.f64()?,
                            left: self.usize()?,
                            right: self.usize()?,
                        },
                        t => return Err(corrupt(format!("bad tree node tag {t}"))),
                    });
                }
                ModelParams::Tree(DecisionTree { nodes })
            }
            t => return Err(corrupt(format!("bad model tag {t}"))),
        };
        Ok(BaseModel {
            params,
            hyperparams,
            train_indices: IndexSample {
                indices,
                with_replacement,
            },
            n_features,
            n_classes,
            scaler: scaler.clone(),
            converged,
        })
    }
}

pub fn encode_ensemble(ens: &HomogeneousEnsemble) -> Vec<u8> {
    let mut w = Writer::default();
    w.header(PAYLOAD_ENSEMBLE);
    w.u8(ens.kind.tag());
    w.usize(ens.n_features);
    w.usize(ens.n_classes);
    w.u64(ens.master_seed);
    w.str(&ens.train_fingerprint);
    w.usize(ens.batch_params.len());
    ens.batch_params.iter().for_each(|hp| w.hyper(hp));
    w.usizes(&ens.batch_sizes);
    w.strs(&ens.warnings);
    match &ens.scaler {
        Some(s) => {
            w.u8(1);
            w.f64s(&s.mean);
            w.f64s(&s.scale);
            w.usizes(&s.degenerate);
        }
        None => w.u8(0),
    }
    w.usize(ens.models.len());
    ens.models.iter().for_each(|m| w.model(m));
    w.finish()
}

pub fn decode_ensemble(buf: &[u8]) -> Result<HomogeneousEnsemble> {
    let mut r = Reader::open(buf, PAYLOAD_ENSEMBLE)?;
    let tag = r.u8()?;
    let kind = ModelKind::from_tag(tag).ok_or_else(|| corrupt(format!("bad kind tag {tag}")))?;
    let n_features = r.usize()?;
    let n_classes = r.usize()?;
    let master_seed = r.u64()?;
    let train_fingerprint = r.str()?;
    let nb = r.len(9)?;
    let batch_params = (0..nb).map(|_| r.hyper()).collect::<Result<Vec<_>>>()?;
    let batch_sizes = r.usizes()?;
    let warnings = r.strs()?;
    let scaler = match r.u8()? {
        0 => None,
        1 => Some(Arc::new(Standardizer {
            mean: r.f64s()?,
            scale: r.f64s()?,
            degenerate: r.usizes()?,
        })),
        b => return Err(corrupt(format!("bad scaler flag {b}"))),
    };
    let nm = r.len(1)?;
    let models = (0..nm)
        .map(|_| r.model(n_features, n_classes, &scaler))
        .collect::<Result<Vec<_>>>()?;
    r.done()?;
    Ok(HomogeneousEnsemble {
        kind,
        models,
        batch_params,
        batch_sizes,
        train_fingerprint,
        master_seed,
        scaler,
        warnings,
        n_features,
        n_classes,
    })
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::default();
    w.header(PAYLOAD_DATASET);
    w.usize(ds.n_instances());
    w.usize(ds.n_features());
    w.f64s(ds.features());
    w.usizes(ds.labels());
    w.strs(ds.class_names());
    w.strs(ds.feature_names());
    w.finish()
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::open(buf, PAYLOAD_DATASET)?;
    let _n = r.usize()?;
    let d = r.usize()?;
    let features = r.f64s()?;
    let labels = r.usizes()?;
    let class_names = r.strs()?;
    let feature_names = r.strs()?;
    r.done()?;
    Dataset::new(features, d, labels, class_names, feature_names)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_ensemble(ens: &HomogeneousEnsemble, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_ensemble(ens))
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<HomogeneousEnsemble> {
    let path = path.as_ref();
    decode_ensemble(&read_file(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_dataset(ds))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    decode_dataset(&read_file(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_twonorm;
    use crate::homogeneous::{build_batched_ensemble_with, build_random_forest, BuildOptions, GridAxis, ParamGrid};
    use crate::learners::MlpOptions;

    fn small_grid(kind: ModelKind) -> ParamGrid {
        let axes = match kind {
            ModelKind::Svm => vec![
                GridAxis { name: "c".into(), values: vec![1.0] },
                GridAxis { name: "gamma".into(), values: vec![0.1, 0.01] },
            ],
            _ => vec![GridAxis { name: "hidden".into(), values: vec![2.0] }],
        };
        ParamGrid::new(axes).unwrap()
    }

    fn ensembles() -> Vec<HomogeneousEnsemble> {
        let ds = gen_twonorm(40, 5).unwrap();
        let opts = BuildOptions {
            mlp: MlpOptions { epochs: 20, ..Default::default() },
            ..Default::default()
        };
        vec![
            build_batched_ensemble_with(ModelKind::Svm, &ds, 4, 2, &small_grid(ModelKind::Svm), 1, &opts).unwrap(),
            build_batched_ensemble_with(ModelKind::Mlp, &ds, 4, 2, &small_grid(ModelKind::Mlp), 2, &opts).unwrap(),
            build_random_forest(&ds, 4, 3).unwrap(),
        ]
    }

    #[test]
    fn ensembles_round_trip_bit_exact() {
        for ens in ensembles() {
            let bytes = encode_ensemble(&ens);
            let back = decode_ensemble(&bytes).unwrap();
            assert_eq!(back, ens);
            assert_eq!(encode_ensemble(&back), bytes);
        }
    }

    #[test]
    fn dataset_round_trip() {
        let ds = gen_twonorm(25, 9).unwrap();
        let back = decode_dataset(&encode_dataset(&ds)).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.fingerprint(), ds.fingerprint());
    }

    #[test]
    fn rejects_damage() {
        let ens = &ensembles()[2];
        let mut bytes = encode_ensemble(ens);
        bytes[20] ^= 1;
        assert!(decode_ensemble(&bytes).unwrap_err().to_string().contains("checksum"));
        assert!(decode_ensemble(&bytes[..10]).is_err());
        let ds = encode_dataset(&gen_twonorm(5, 1).unwrap());
        assert!(decode_ensemble(&ds).unwrap_err().to_string().contains("payload type"));
    }
}
