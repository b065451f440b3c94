use crate::error::{Error, Result};
use crate::networks::{Archive, Parameterized};

/// Conventional Adagrad stabiliser.
pub const ADAGRAD_EPS: f64 = 1e-10;

/// Adagrad with a zero-initialised squared-gradient accumulator per
/// trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adagrad {
    pub learning_rate: f64,
    pub eps: f64,
    accum: Vec<Vec<f64>>,
}

impl Adagrad {
    pub fn new(learning_rate: f64, module: &impl Parameterized) -> Self {
        let accum = module
            .named_params()
            .into_iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| vec![0.0; p.len()])
            .collect();
        Self {
            learning_rate,
            eps: ADAGRAD_EPS,
            accum,
        }
    }

    /// Applies one update from the gradients currently held by `module`.
    pub fn step(&mut self, module: &mut impl Parameterized) {
        let params = module.named_params_mut().into_iter().filter(|(_, p)| p.trainable);
        for (acc, (_, p)) in self.accum.iter_mut().zip(params) {
            if p.grad.is_empty() {
                continue;
            }
            for ((v, &g), a) in p.value.iter_mut().zip(&p.grad).zip(acc.iter_mut()) {
                *a += g * g;
                *v -= self.learning_rate * g / (a.sqrt() + self.eps);
            }
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accum
    }

    pub fn store(&self, archive: &mut Archive, prefix: &str, module: &impl Parameterized) {
        let names = module.named_params().into_iter().filter(|(_, p)| p.trainable);
        for (acc, (name, p)) in self.accum.iter().zip(names) {
            archive.insert(format!("{prefix}.{name}"), p.shape.clone(), acc.clone());
        }
    }

    pub fn load(&mut self, archive: &Archive, prefix: &str, module: &impl Parameterized) -> Result<()> {
        let names = module.named_params().into_iter().filter(|(_, p)| p.trainable);
        for (acc, (name, p)) in self.accum.iter_mut().zip(names) {
            let t = archive.tensor(&format!("{prefix}.{name}"))?;
            if t.shape != p.shape {
                return Err(Error::Checkpoint(format!(
                    "optimizer state for `{name}` has shape {:?}",
                    t.shape
                )));
            }
            acc.copy_from_slice(&t.data);
        }
        Ok(())
    }
}
