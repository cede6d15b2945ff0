//! The retraining trigger: consecutive rejections of the enrolled user are
//! evidence of drift, and enough of them in a row schedules a refresh.

use serde::{Deserialize, Serialize};

use super::sprt::SprtDecision;

/// Emitted when the rejection streak reaches the configured length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrainSignal {
    pub consecutive_rejections: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCounter {
    threshold: u32,
    streak: u32,
}

impl Default for FeedbackCounter {
    fn default() -> Self {
        Self::new(3)
    }
}

impl FeedbackCounter {
    pub fn new(threshold: u32) -> Self {
        assert!(threshold > 0, "a zero threshold would fire before any decision");
        Self { threshold, streak: 0 }
    }

    pub fn streak(&self) -> u32 {
        self.streak
    }

    /// Record one decision. An acceptance clears the streak; the rejection
    /// that completes it returns the signal and resets for the next round.
    pub fn record(&mut self, decision: SprtDecision) -> Option<RetrainSignal> {
        match decision {
            SprtDecision::Accept => {
                self.streak = 0;
                None
            }
            SprtDecision::Reject => {
                self.streak += 1;
                if self.streak >= self.threshold {
                    let fired = RetrainSignal {
                        consecutive_rejections: self.streak,
                    };
                    self.streak = 0;
                    Some(fired)
                } else {
                    None
                }
            }
        }
    }
}
