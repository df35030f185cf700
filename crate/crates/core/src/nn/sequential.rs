use rand::Rng;

use super::{Layer, Matrix, Mode, Param};
use crate::{AdepError, Result};

/// An ordered stack of layers.
#[derive(Debug, Clone)]
pub struct Sequential {
    name: String,
    layers: Vec<Layer>,
    sign_flip: Option<usize>,
}

impl Sequential {
    /// Fails when consecutive width-carrying layers disagree.
    pub fn new(name: impl Into<String>, layers: Vec<Layer>) -> Result<Self> {
        let name = name.into();
        let mut width: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            if let (Some(w), Some(expected)) = (width, layer.input_dim()) {
                if w != expected {
                    return Err(AdepError::dim(
                        format!("{name} layer {i} ({})", layer.describe()),
                        expected,
                        w,
                    ));
                }
            }
            if let Some(out) = layer.output_dim() {
                width = Some(out);
            }
        }
        Ok(Sequential {
            name,
            layers,
            sign_flip: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(Layer::input_dim)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(Layer::output_dim)
    }

    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Matrix> {
        let mut x = self.layers[0].forward(input, mode, rng)?;
        for layer in &mut self.layers[1..] {
            x = layer.forward(&x, mode, rng)?;
        }
        Ok(x)
    }

    /// Eval-mode pass through [`Layer::infer`]; takes `&self`.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        let mut x = self.layers[0].infer(input)?;
        for layer in &self.layers[1..] {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if self.sign_flip == Some(i) {
                g = flipped_backward(&mut self.layers[i], &g)?;
            } else {
                g = self.layers[i].backward(&g)?;
            }
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    /// Parameters named `<net>.<layer index>.<tensor>`.
    pub fn params(&mut self) -> Vec<Param<'_>> {
        let name = &self.name;
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, layer)| {
                layer.params().into_iter().map(move |mut p| {
                    p.name = format!("{name}.{i}.{}", p.name);
                    p
                })
            })
            .collect()
    }

    /// Persisted tensors named like [`Sequential::params`].
    pub fn state(&mut self) -> Vec<(String, Vec<usize>, &mut [f64])> {
        let name = &self.name;
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, layer)| {
                layer
                    .state()
                    .into_iter()
                    .map(move |(t, shape, data)| (format!("{name}.{i}.{t}"), shape, data))
            })
            .collect()
    }

    pub fn param_count(&mut self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Forces every dropout rate to zero.
    pub fn disable_dropout(&mut self) {
        for layer in &mut self.layers {
            if let Layer::Dropout(_) = layer {
                *layer = Layer::dropout(0.0).expect("zero is a valid rate");
            }
        }
    }

    /// Fault injection for gradient-check negative controls: the backward
    /// pass of layer `index` returns negated gradients.
    pub fn inject_sign_flip(&mut self, index: Option<usize>) {
        self.sign_flip = index;
    }
}

fn flipped_backward(layer: &mut Layer, grad_out: &Matrix) -> Result<Matrix> {
    let before: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.to_vec()).collect();
    let mut g = layer.backward(grad_out)?;
    g.scale(-1.0);
    for (p, old) in layer.params().into_iter().zip(before) {
        for (cur, prev) in p.grad.iter_mut().zip(old) {
            *cur = 2.0 * prev - *cur;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_inconsistent_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ok = Sequential::new(
            "net",
            vec![
                Layer::linear(4, 3, &mut rng),
                Layer::batch_norm(3),
                Layer::relu(),
            ],
        );
        assert!(ok.is_ok());
        let bad = Sequential::new(
            "net",
            vec![Layer::linear(4, 3, &mut rng), Layer::batch_norm(5)],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn parameter_names_are_qualified() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Sequential::new(
            "enc",
            vec![
                Layer::linear(4, 3, &mut rng),
                Layer::relu(),
                Layer::batch_norm(3),
            ],
        )
        .unwrap();
        let names: Vec<String> = net.params().into_iter().map(|p| p.name).collect();
        assert_eq!(
            names,
            ["enc.0.weight", "enc.0.bias", "enc.2.gamma", "enc.2.beta"]
        );
        assert_eq!(net.param_count(), 12 + 3 + 3 + 3);
    }
}
