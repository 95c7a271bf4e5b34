use std::cmp::Ordering;

use crate::params::Branch;

/// What happens at an event epoch.
///
/// The declaration order is the tie-break order for simultaneous events:
/// completions are handled before arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    ServiceCompletionA,
    ServiceCompletionB,
    ExternalArrival,
}

impl EventKind {
    pub fn completion(branch: Branch) -> EventKind {
        match branch {
            Branch::A => EventKind::ServiceCompletionA,
            Branch::B => EventKind::ServiceCompletionB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub job_id: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.job_id.cmp(&other.job_id))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
