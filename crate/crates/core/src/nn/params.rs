//! Named parameter blocks.

use super::tensor::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub shape: Vec<usize>,
    /// Running BN statistics are stored here too but are not optimized.
    pub trainable: bool,
    pub data: Vec<T>,
}

impl<T> ParamBlock<T> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    blocks: Vec<ParamBlock<T>>,
}

/// One gradient buffer per store block, in store order. Non-trainable blocks
/// get zero-filled buffers.
pub type Gradients<T> = Vec<Vec<T>>;

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { blocks: Vec::new() }
    }

    pub(crate) fn push(&mut self, name: String, shape: Vec<usize>, trainable: bool, data: Vec<T>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.blocks.push(ParamBlock {
            name,
            shape,
            trainable,
            data,
        });
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[ParamBlock<T>] {
        &self.blocks
    }

    pub fn block(&self, index: usize) -> &ParamBlock<T> {
        &self.blocks[index]
    }

    pub fn block_mut(&mut self, index: usize) -> &mut ParamBlock<T> {
        &mut self.blocks[index]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total element count, running statistics included.
    pub fn total_elements(&self) -> usize {
        self.blocks.iter().map(ParamBlock::len).sum()
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        self.blocks.iter().map(|b| vec![T::zero(); b.len()]).collect()
    }

    /// Element-wise conversion, e.g. to run a gradient check in `f64`.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    trainable: b.trainable,
                    data: b.data.iter().map(|&x| U::of(x.f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data.iter().all(|x| x.is_finite()))
    }
}
