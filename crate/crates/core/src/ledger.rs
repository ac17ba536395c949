//! Append-only, hash-chained settlement log.
//!
//! Every record stores its payload in a canonical byte encoding (big-endian,
//! fixed-width fields in a fixed order) and the SHA-256 of
//!
//! ```text
//! index (u64) | kind (u8) | payload length (u32) | payload | prev_hash (32 bytes)
//! ```
//!
//! so any change to a record, or to the order of records, breaks the chain at
//! or before the changed position.
//!
//! The text dump holds one record per line:
//!
//! ```text
//! <index> <kind> <prev_hash hex> <hash hex> <payload hex> # <readable payload>
//! ```
//!
//! Lines starting with `#` are comments. Everything after the payload field
//! is informational and ignored by [`parse_dump`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::allocation::Assignment;
use crate::pricing::PricingOutcome;
use crate::{MarketError, Prices, Result, Scenario};

pub type Hash = [u8; 32];

pub const GENESIS_PREV: Hash = [0; 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Offer,
    Purchase,
    Settlement,
}

impl RecordKind {
    fn tag(self) -> u8 {
        match self {
            RecordKind::Offer => 0,
            RecordKind::Purchase => 1,
            RecordKind::Settlement => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Offer => "offer",
            RecordKind::Purchase => "purchase",
            RecordKind::Settlement => "settlement",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "offer" => Some(RecordKind::Offer),
            "purchase" => Some(RecordKind::Purchase),
            "settlement" => Some(RecordKind::Settlement),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Posted prices and each BS's capacities `(render, bandwidth)`.
    Offer {
        prices: Prices,
        capacities: Vec<(f64, f64)>,
    },
    Purchase {
        msu_id: u64,
        x_render: f64,
        x_bandwidth: f64,
        spend: f64,
    },
    Settlement {
        assignment_digest: Hash,
        profit: f64,
    },
}

impl Payload {
    pub fn kind(&self) -> RecordKind {
        match self {
            Payload::Offer { .. } => RecordKind::Offer,
            Payload::Purchase { .. } => RecordKind::Purchase,
            Payload::Settlement { .. } => RecordKind::Settlement,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Payload::Offer { prices, capacities } => {
                out.extend(prices.render.to_be_bytes());
                out.extend(prices.bandwidth.to_be_bytes());
                out.extend((capacities.len() as u32).to_be_bytes());
                for (r, w) in capacities {
                    out.extend(r.to_be_bytes());
                    out.extend(w.to_be_bytes());
                }
            }
            Payload::Purchase {
                msu_id,
                x_render,
                x_bandwidth,
                spend,
            } => {
                out.extend(msu_id.to_be_bytes());
                out.extend(x_render.to_be_bytes());
                out.extend(x_bandwidth.to_be_bytes());
                out.extend(spend.to_be_bytes());
            }
            Payload::Settlement {
                assignment_digest,
                profit,
            } => {
                out.extend(assignment_digest);
                out.extend(profit.to_be_bytes());
            }
        }
        out
    }

    pub fn from_bytes(kind: RecordKind, bytes: &[u8]) -> Option<Self> {
        let mut r = Reader(bytes);
        let payload = match kind {
            RecordKind::Offer => {
                let prices = Prices::new(r.f64()?, r.f64()?);
                let n = r.u32()? as usize;
                let mut capacities = Vec::with_capacity(n.min(bytes.len() / 16));
                for _ in 0..n {
                    capacities.push((r.f64()?, r.f64()?));
                }
                Payload::Offer { prices, capacities }
            }
            RecordKind::Purchase => Payload::Purchase {
                msu_id: r.u64()?,
                x_render: r.f64()?,
                x_bandwidth: r.f64()?,
                spend: r.f64()?,
            },
            RecordKind::Settlement => Payload::Settlement {
                assignment_digest: r.take(32)?.try_into().ok()?,
                profit: r.f64()?,
            },
        };
        r.0.is_empty().then_some(payload)
    }

    fn describe(&self) -> String {
        match self {
            Payload::Offer { prices, capacities } => {
                let caps: Vec<String> = capacities
                    .iter()
                    .map(|(r, w)| format!("({r}, {w})"))
                    .collect();
                format!(
                    "pr={} pw={} capacities=[{}]",
                    prices.render,
                    prices.bandwidth,
                    caps.join(", ")
                )
            }
            Payload::Purchase {
                msu_id,
                x_render,
                x_bandwidth,
                spend,
            } => {
                format!("msu={msu_id} xr={x_render} xw={x_bandwidth} spend={spend}")
            }
            Payload::Settlement {
                assignment_digest,
                profit,
            } => {
                format!(
                    "assignment={} profit={profit}",
                    hex::encode(assignment_digest)
                )
            }
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.0.len() < n {
            return None;
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_be_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_be_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_be_bytes(self.take(8)?.try_into().ok()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerRecord {
    pub index: u64,
    pub kind: RecordKind,
    /// Canonical payload encoding.
    pub payload: Vec<u8>,
    pub prev_hash: Hash,
    pub hash: Hash,
}

impl LedgerRecord {
    pub fn decode(&self) -> Option<Payload> {
        Payload::from_bytes(self.kind, &self.payload)
    }
}

pub fn record_hash(index: u64, kind: RecordKind, payload: &[u8], prev_hash: &Hash) -> Hash {
    let mut h = Sha256::new();
    h.update(index.to_be_bytes());
    h.update([kind.tag()]);
    h.update((payload.len() as u32).to_be_bytes());
    h.update(payload);
    h.update(prev_hash);
    h.finalize().into()
}

/// Position of the first record whose index, linkage or hash is wrong.
pub fn verify_chain(records: &[LedgerRecord]) -> Option<usize> {
    let mut prev = GENESIS_PREV;
    for (k, rec) in records.iter().enumerate() {
        if rec.index != k as u64
            || rec.prev_hash != prev
            || rec.hash != record_hash(rec.index, rec.kind, &rec.payload, &rec.prev_hash)
        {
            return Some(k);
        }
        prev = rec.hash;
    }
    None
}

/// Hash chain plus the budget registry used by the purchase contract.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
    budgets: BTreeMap<u64, f64>,
}

impl Ledger {
    pub fn new(budgets: impl IntoIterator<Item = (u64, f64)>) -> Self {
        Self {
            records: Vec::new(),
            budgets: budgets.into_iter().collect(),
        }
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn head(&self) -> Hash {
        self.records.last().map_or(GENESIS_PREV, |r| r.hash)
    }

    /// Appends a record. A purchase must follow an offer, price its bundle
    /// at the offered prices and stay within the buyer's budget.
    pub fn append(&mut self, payload: Payload) -> Result<&LedgerRecord> {
        if let Payload::Purchase {
            msu_id,
            x_render,
            x_bandwidth,
            spend,
        } = payload
        {
            let budget = *self.budgets.get(&msu_id).ok_or_else(|| {
                MarketError::InvalidInput(format!("purchase by unregistered user {msu_id}"))
            })?;
            let prices = self.latest_offer().ok_or_else(|| {
                MarketError::InvalidInput("purchase recorded before any offer".into())
            })?;
            let priced = prices.render * x_render + prices.bandwidth * x_bandwidth;
            if x_render < 0.0
                || x_bandwidth < 0.0
                || (priced - spend).abs() > 1e-9 * (1.0 + spend.abs())
            {
                return Err(MarketError::InvalidInput(format!(
                    "purchase by user {msu_id} spends {spend} but the bundle costs {priced}"
                )));
            }
            if spend > budget * (1.0 + 1e-12) {
                return Err(MarketError::ContractRejected {
                    msu_id,
                    spend,
                    budget,
                });
            }
        }
        let index = self.records.len() as u64;
        let kind = payload.kind();
        let bytes = payload.to_bytes();
        let prev_hash = self.head();
        let hash = record_hash(index, kind, &bytes, &prev_hash);
        self.records.push(LedgerRecord {
            index,
            kind,
            payload: bytes,
            prev_hash,
            hash,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    fn latest_offer(&self) -> Option<Prices> {
        self.records
            .iter()
            .rev()
            .filter(|r| r.kind == RecordKind::Offer)
            .find_map(|r| match r.decode()? {
                Payload::Offer { prices, .. } => Some(prices),
                _ => None,
            })
    }

    pub fn verify(&self) -> Option<usize> {
        verify_chain(&self.records)
    }
}

/// Digest of a user-to-BS mapping; unserved users encode as `u64::MAX`.
pub fn assignment_digest(assignment: &Assignment) -> Hash {
    let mut h = Sha256::new();
    h.update((assignment.serving_bs.len() as u64).to_be_bytes());
    for s in &assignment.serving_bs {
        h.update(s.map_or(u64::MAX, |j| j as u64).to_be_bytes());
    }
    h.finalize().into()
}

/// Offer, one purchase per served user, then the settlement.
pub fn record_experiment(scenario: &Scenario, outcome: &PricingOutcome) -> Result<Ledger> {
    let mut ledger = Ledger::new(scenario.msus.iter().map(|u| (u.id as u64, u.budget)));
    let prices = outcome.prices();
    ledger.append(Payload::Offer {
        prices,
        capacities: scenario
            .bss
            .iter()
            .map(|b| (b.cap_render, b.cap_bandwidth))
            .collect(),
    })?;
    for (i, served) in outcome.assignment.serving_bs.iter().enumerate() {
        if served.is_none() {
            continue;
        }
        let d = outcome.demands[i];
        ledger.append(Payload::Purchase {
            msu_id: scenario.msus[i].id as u64,
            x_render: d.x_render,
            x_bandwidth: d.x_bandwidth,
            spend: d.spend(prices),
        })?;
    }
    ledger.append(Payload::Settlement {
        assignment_digest: assignment_digest(&outcome.assignment),
        profit: outcome.profit,
    })?;
    Ok(ledger)
}

pub fn dump(records: &[LedgerRecord]) -> String {
    let mut out = String::from("# index kind prev_hash hash payload # readable\n");
    for r in records {
        let readable = r
            .decode()
            .map_or_else(|| "<undecodable>".to_string(), |p| p.describe());
        let _ = writeln!(
            out,
            "{} {} {} {} {} # {}",
            r.index,
            r.kind.as_str(),
            hex::encode(r.prev_hash),
            hex::encode(r.hash),
            hex::encode(&r.payload),
            readable
        );
    }
    out
}

pub fn parse_dump(text: &str) -> Result<Vec<LedgerRecord>> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |reason: String| MarketError::LedgerFormat {
            line: line_no,
            reason,
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().take(5).collect();
        let [index, kind, prev, hash, payload] = fields[..] else {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        };
        let digest = |s: &str, what: &str| -> Result<Hash> {
            hex::decode(s)
                .ok()
                .and_then(|v| v.try_into().ok())
                .ok_or_else(|| err(format!("{what} is not a 32-byte hex digest")))
        };
        records.push(LedgerRecord {
            index: index
                .parse()
                .map_err(|_| err(format!("bad index `{index}`")))?,
            kind: RecordKind::parse(kind).ok_or_else(|| err(format!("unknown kind `{kind}`")))?,
            prev_hash: digest(prev, "prev_hash")?,
            hash: digest(hash, "hash")?,
            payload: hex::decode(payload).map_err(|e| err(format!("payload: {e}")))?,
        });
    }
    Ok(records)
}

pub fn write_dump(path: impl AsRef<Path>, records: &[LedgerRecord]) -> Result<()> {
    std::fs::write(path, dump(records))?;
    Ok(())
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<Vec<LedgerRecord>> {
    parse_dump(&std::fs::read_to_string(path)?)
}
