//! Reviewed reconciliation: the cascade runs on a copy of the store and its
//! actions are offered one at a time. Accepting them in order reproduces
//! the cascade exactly; a rejection invalidates everything after it.

use bnelicit::elicitation::{reconcile, ReconcileConfig, ReconcileOutcome, ReconciliationAction};
use bnelicit::{Dag, ElicitationStore};

use crate::error::{Result, ServiceError};

pub fn propose(store: &ElicitationStore, dag: &Dag, config: &ReconcileConfig) -> Result<ReconcileOutcome> {
    let mut trial = store.clone();
    Ok(reconcile(&mut trial, dag, config)?)
}

#[derive(Debug, Clone, Default)]
pub struct ProposalQueue {
    pending: Vec<ReconciliationAction>,
}

impl ProposalQueue {
    pub fn new(actions: Vec<ReconciliationAction>) -> Self {
        ProposalQueue { pending: actions }
    }

    pub fn pending(&self) -> &[ReconciliationAction] {
        &self.pending
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    fn take(&mut self, store: &ElicitationStore, id: u64) -> Result<(usize, ReconciliationAction)> {
        let pos = self
            .pending
            .iter()
            .position(|a| a.id == id)
            .ok_or(ServiceError::UnknownProposal(id))?;
        let action = self.pending[pos].clone();
        if action.base_revision != store.revision() {
            return Err(ServiceError::Conflict(format!(
                "proposal {id} was computed at revision {} but the store is at revision {}",
                action.base_revision,
                store.revision()
            )));
        }
        Ok((pos, action))
    }

    pub fn accept(&mut self, store: &mut ElicitationStore, dag: &Dag, id: u64) -> Result<ReconciliationAction> {
        let (pos, action) = self.take(store, id)?;
        store.apply(dag, action.clone())?;
        self.pending.drain(..=pos);
        Ok(action)
    }

    /// Logs the rejection; later proposals assumed this one and are dropped.
    pub fn reject(&mut self, store: &mut ElicitationStore, id: u64) -> Result<ReconciliationAction> {
        let (_, action) = self.take(store, id)?;
        store.reject(action.clone());
        self.pending.clear();
        Ok(action)
    }
}
