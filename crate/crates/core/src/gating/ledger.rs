//! Per-step record of a gated training run.

use super::alpha::GateKey;
use crate::error::{Error, Result};
use crate::predictors::keying::InputKey;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};

/// One online step. Keys are indices into the ledger's key tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRecord {
    pub t: u64,
    pub gate: u32,
    pub iw: u32,
    pub label: u32,
    pub alpha: f64,
    pub loss_f: f64,
    pub loss_g: f64,
    pub loss_h: f64,
    /// Loss of the fixed in-context comparator; equals `loss_h` when `h` is not learned.
    pub loss_h_star: f64,
}

/// Row of the CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: u64,
    pub gate_key: String,
    pub alpha_used: f64,
    pub loss_f: f64,
    pub loss_g: f64,
    pub loss_h: f64,
    pub iw_key: String,
    pub label: u32,
    pub loss_h_star: f64,
}

#[derive(Debug, Clone)]
struct Interner<K> {
    keys: Vec<K>,
    index: HashMap<K, u32>,
}

impl<K: Copy + Eq + std::hash::Hash> Interner<K> {
    fn new() -> Self {
        Self { keys: Vec::new(), index: HashMap::new() }
    }

    fn intern(&mut self, key: K) -> u32 {
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.keys.len() as u32;
        self.keys.push(key);
        self.index.insert(key, i);
        i
    }
}

#[derive(Debug, Clone)]
pub struct RegretLedger {
    num_classes: usize,
    gate_keys: Interner<GateKey>,
    iw_keys: Interner<InputKey>,
    records: Vec<LedgerRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub alpha: f64,
    pub loss_f: f64,
    pub loss_g: f64,
    pub loss_h: f64,
    pub loss_h_star: f64,
}

impl RegretLedger {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, gate_keys: Interner::new(), iw_keys: Interner::new(), records: Vec::new() }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn gate_key(&self, index: u32) -> GateKey {
        self.gate_keys.keys[index as usize]
    }

    pub fn iw_key(&self, index: u32) -> InputKey {
        self.iw_keys.keys[index as usize]
    }

    pub fn gate_keys(&self) -> &[GateKey] {
        &self.gate_keys.keys
    }

    pub fn iw_keys(&self) -> &[InputKey] {
        &self.iw_keys.keys
    }

    pub fn gate_index(&self, key: &GateKey) -> Option<u32> {
        self.gate_keys.index.get(key).copied()
    }

    pub fn iw_index(&self, key: &InputKey) -> Option<u32> {
        self.iw_keys.index.get(key).copied()
    }

    pub fn push(&mut self, t: u64, gate: GateKey, iw: InputKey, label: usize, losses: StepLosses) -> Result<()> {
        if let Some(last) = self.records.last() {
            if t <= last.t {
                return Err(Error::Malformed(format!("ledger step {t} does not follow step {}", last.t)));
            }
        }
        if label >= self.num_classes {
            return Err(Error::DimensionMismatch { expected: self.num_classes, actual: label + 1 });
        }
        let StepLosses { alpha, loss_f, loss_g, loss_h, loss_h_star } = losses;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Malformed(format!("gate {alpha} outside [0, 1]")));
        }
        for l in [loss_f, loss_g, loss_h, loss_h_star] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Malformed(format!("loss {l} is not finite and nonnegative")));
            }
        }
        let gate = self.gate_keys.intern(gate);
        let iw = self.iw_keys.intern(iw);
        self.records.push(LedgerRecord { t, gate, iw, label: label as u32, alpha, loss_f, loss_g, loss_h, loss_h_star });
        Ok(())
    }

    /// Overwrites the comparator losses, e.g. after a replay with the final learned `h`.
    pub fn set_h_star_losses(&mut self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.records.len() {
            return Err(Error::DimensionMismatch { expected: self.records.len(), actual: losses.len() });
        }
        for (r, &l) in self.records.iter_mut().zip(losses) {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Malformed(format!("loss {l} is not finite and nonnegative")));
            }
            r.loss_h_star = l;
        }
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = LedgerRow> + '_ {
        self.records.iter().map(|r| LedgerRow {
            t: r.t,
            gate_key: self.gate_key(r.gate).to_string(),
            alpha_used: r.alpha,
            loss_f: r.loss_f,
            loss_g: r.loss_g,
            loss_h: r.loss_h,
            iw_key: self.iw_key(r.iw).to_string(),
            label: r.label,
            loss_h_star: r.loss_h_star,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, num_classes: usize) -> Result<Self> {
        let mut ledger = Self::new(num_classes);
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: LedgerRow = row?;
            ledger.push(
                row.t,
                row.gate_key.parse()?,
                row.iw_key.parse()?,
                row.label as usize,
                StepLosses {
                    alpha: row.alpha_used,
                    loss_f: row.loss_f,
                    loss_g: row.loss_g,
                    loss_h: row.loss_h,
                    loss_h_star: row.loss_h_star,
                },
            )?;
        }
        Ok(ledger)
    }
}
