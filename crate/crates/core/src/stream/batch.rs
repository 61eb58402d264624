use numcore::Tensor;
use rayon::prelude::*;

use super::StreamSession;
use crate::error::{Error, Result};
use crate::model::{MultiQt, Prediction};

/// Several concurrent calls against one model, advanced together one tick at
/// a time. Each session runs its own chunk on the rayon pool; sessions share
/// nothing but the immutable parameters, so every call's output is identical
/// to streaming it alone.
pub struct Batcher<'m> {
    sessions: Vec<StreamSession<'m>>,
}

impl<'m> Batcher<'m> {
    pub fn new(model: &'m MultiQt<f32>, streams: usize) -> Self {
        Self {
            sessions: (0..streams).map(|_| StreamSession::open(model)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn session(&self, i: usize) -> &StreamSession<'m> {
        &self.sessions[i]
    }

    /// Push one chunk per stream; `None` skips a stream this tick (chunks
    /// may be ragged or missing). Returns each stream's new outputs.
    pub fn tick(&mut self, chunks: &[Option<(&Tensor<f32>, &Tensor<f32>)>]) -> Result<Vec<Prediction<f32>>> {
        if chunks.len() != self.sessions.len() {
            return Err(Error::Stream(format!(
                "tick has {} chunks for {} streams",
                chunks.len(),
                self.sessions.len()
            )));
        }
        self.sessions
            .par_iter_mut()
            .zip(chunks.par_iter())
            .map(|(s, c)| match c {
                Some((a, t)) => s.push_chunk(a, t),
                None => {
                    let (fa, fs) = s.features();
                    s.push_chunk(&Tensor::zeros(&[0, fa]), &Tensor::zeros(&[0, fs]))
                }
            })
            .collect()
    }

    /// Finalize every stream that is not finalized yet.
    pub fn finalize(&mut self) -> Result<Vec<Prediction<f32>>> {
        self.sessions.par_iter_mut().map(|s| s.finalize()).collect()
    }
}
