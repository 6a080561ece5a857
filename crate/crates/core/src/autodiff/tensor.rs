use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array.
///
/// Every extent is positive and `data.len()` is the product of the shape.
/// Scalars are stored with shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::contract(format!(
                "tensor shape must be non-empty with positive extents, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::new(shape.to_vec(), vec![T::zero(); numel]).expect("zeros: invalid shape")
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; numel]).expect("full: invalid shape")
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Builds a `rows.len() × width` matrix; all rows must share one width.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Dimension {
                    op: "from_rows",
                    lhs: vec![i, row.len()],
                    rhs: vec![0, width],
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), width], data)
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(Error::Dimension {
                op,
                lhs: other.to_vec(),
                rhs: vec![0, 0],
            }),
        }
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows of a 2-D tensor, in order.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        let (rows, cols) = self.dims2("gather_rows")?;
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(Error::contract(format!(
                    "gather_rows: index {i} out of range for {rows} rows"
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(vec![indices.len(), cols], data)
    }

    /// Stacks two matrices with equal column counts.
    pub fn concat_rows(&self, other: &Self) -> Result<Self> {
        let (ra, ca) = self.dims2("concat_rows")?;
        let (rb, cb) = other.dims2("concat_rows")?;
        if ca != cb {
            return Err(Error::Dimension {
                op: "concat_rows",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut data = Vec::with_capacity((ra + rb) * ca);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Self::new(vec![ra + rb, ca], data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Row-wise softmax of a `b × K` matrix with max-subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, cols) = logits.dims2("softmax")?;
    if cols < 2 {
        return Err(Error::contract(format!(
            "softmax needs at least 2 classes, got {cols}"
        )));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut total = T::zero();
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    Tensor::new(vec![rows, cols], out)
}
