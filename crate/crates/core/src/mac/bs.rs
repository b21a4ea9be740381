use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::phy::{SpectrumPlan, SubcarrierId};

/// One bit per subcarrier; bit `i − 1` acknowledges subcarrier `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckBitVector {
    pub bits: Vec<bool>,
}

impl AckBitVector {
    pub fn new(num_subcarriers: usize) -> Self {
        Self { bits: vec![false; num_subcarriers] }
    }

    pub fn set(&mut self, id: SubcarrierId) {
        self.bits[id as usize - 1] = true;
    }

    pub fn is_set(&self, id: SubcarrierId) -> bool {
        id >= 1 && self.bits.get(id as usize - 1).copied().unwrap_or(false)
    }

    pub fn ones(&self) -> Vec<SubcarrierId> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as SubcarrierId + 1).collect()
    }

    /// Packed MSB-first, as carried in the ACK payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        crate::phy::packet::bits_to_bytes(&self.bits)
    }
}

/// Sets bit i for every subcarrier i in `decoded`.
pub fn bs_ack_epoch(decoded: &BTreeSet<SubcarrierId>, plan: &SpectrumPlan) -> Result<AckBitVector> {
    let data = plan.data_subcarriers();
    let mut v = AckBitVector::new(plan.num_subcarriers as usize);
    for &id in decoded {
        if !data.contains(&id) {
            return Err(Error::invalid(format!("subcarrier {id} is not a data subcarrier")));
        }
        v.set(id);
    }
    Ok(v)
}

/// One-byte node identifier carried next to shared subcarriers.
pub fn short_id(node: usize) -> u8 {
    (node % 256) as u8
}

/// An ACK broadcast: the bit-vector plus, for subcarriers assigned to more
/// than one node, the short ids of the nodes actually decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckEpoch {
    pub vector: AckBitVector,
    pub shared: BTreeMap<SubcarrierId, Vec<u8>>,
}

impl AckEpoch {
    /// Builds the epoch for `decoded` (subcarrier, node) pairs.
    pub fn build(decoded: &[(SubcarrierId, usize)], bs: &BsState, plan: &SpectrumPlan) -> Result<Self> {
        let subs: BTreeSet<SubcarrierId> = decoded.iter().map(|d| d.0).collect();
        let vector = bs_ack_epoch(&subs, plan)?;
        let mut shared: BTreeMap<SubcarrierId, Vec<u8>> = BTreeMap::new();
        for &(sub, node) in decoded {
            if bs.sharers(sub) > 1 {
                shared.entry(sub).or_default().push(short_id(node));
            }
        }
        Ok(Self { vector, shared })
    }

    /// Whether this epoch acknowledges `node` on `sub`.
    pub fn acknowledges(&self, sub: SubcarrierId, node: usize) -> bool {
        if !self.vector.is_set(sub) {
            return false;
        }
        match self.shared.get(&sub) {
            Some(ids) => ids.contains(&short_id(node)),
            None => true,
        }
    }

    /// Payload bytes: the packed vector, then (subcarrier, id) byte pairs.
    pub fn payload(&self) -> Vec<u8> {
        let mut p = self.vector.to_bytes();
        for (&sub, ids) in &self.shared {
            for &id in ids {
                p.push(sub as u8);
                p.push(id);
            }
        }
        p
    }
}

/// Downlink quality summary that may trigger a failover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReport {
    pub downlink_prr: f64,
    pub threshold: f64,
}

impl NoiseReport {
    pub fn new(downlink_prr: f64) -> Self {
        Self { downlink_prr, threshold: 0.5 }
    }

    pub fn triggers(&self) -> bool {
        self.downlink_prr < self.threshold
    }
}

/// Base-station bookkeeping shared by the Rx and Tx radios.
#[derive(Debug, Clone, PartialEq)]
pub struct BsState {
    pub downlink_index: SubcarrierId,
    pub downlink_backups: Vec<SubcarrierId>,
    pub retired: Vec<SubcarrierId>,
    pub subcarrier_assignments: BTreeMap<usize, SubcarrierId>,
    pub pending_acks: Vec<(SubcarrierId, usize)>,
    /// Number of broadcasts sent on the old downlink before a switch.
    pub failover_announcements: u32,
}

impl BsState {
    pub fn new(plan: &SpectrumPlan) -> Self {
        Self {
            downlink_index: plan.downlink_index,
            downlink_backups: plan.backup_indices.clone(),
            retired: Vec::new(),
            subcarrier_assignments: BTreeMap::new(),
            pending_acks: Vec::new(),
            failover_announcements: 3,
        }
    }

    pub fn sharers(&self, sub: SubcarrierId) -> usize {
        self.subcarrier_assignments.values().filter(|&&s| s == sub).count()
    }

    /// Least-loaded data subcarrier, lowest id first.  Once every data
    /// subcarrier is taken the next node shares with exactly one other.
    pub fn assign(&mut self, node: usize, plan: &SpectrumPlan) -> Result<SubcarrierId> {
        if let Some(&s) = self.subcarrier_assignments.get(&node) {
            return Ok(s);
        }
        let data = plan.data_subcarriers();
        let sub = data
            .iter()
            .copied()
            .filter(|s| !self.retired.contains(s) && *s != self.downlink_index)
            .min_by_key(|&s| (self.sharers(s), s))
            .ok_or_else(|| Error::Config("no data subcarriers available".into()))?;
        self.subcarrier_assignments.insert(node, sub);
        Ok(sub)
    }
}

/// Switches the downlink to the first backup when `report` shows a bad
/// downlink.  The old subcarrier is retired for the session.
pub fn downlink_failover(bs: &BsState, report: NoiseReport) -> Result<BsState> {
    if !report.triggers() {
        return Ok(bs.clone());
    }
    let Some((&first, rest)) = bs.downlink_backups.split_first() else {
        return Err(Error::BackupsExhausted);
    };
    let mut next = bs.clone();
    next.retired.push(bs.downlink_index);
    next.downlink_index = first;
    next.downlink_backups = rest.to_vec();
    Ok(next)
}
