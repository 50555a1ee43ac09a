use crate::error::{shape_err, Result};
use crate::tensor::{GradFn, Scalar, Tensor, TensorData};

fn split_channels(shape: &[usize]) -> (&[usize], usize) {
    match shape.split_last() {
        Some((&c, lead)) => (lead, c),
        None => (&[], 1),
    }
}

struct ConcatBackward {
    ca: usize,
    cb: usize,
}

impl<T: Scalar> GradFn<T> for ConcatBackward {
    fn name(&self) -> &'static str {
        "concat_channels"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let c = self.ca + self.cb;
        let pixels = if c == 0 { 0 } else { g.len() / c };
        let mut da = parents[0].requires_grad().then(|| Vec::with_capacity(pixels * self.ca));
        let mut db = parents[1].requires_grad().then(|| Vec::with_capacity(pixels * self.cb));
        for px in g.chunks_exact(c.max(1)) {
            if let Some(da) = da.as_mut() {
                da.extend_from_slice(&px[..self.ca]);
            }
            if let Some(db) = db.as_mut() {
                db.extend_from_slice(&px[self.ca..]);
            }
        }
        vec![da, db]
    }
}

/// Stacks `b`'s channels after `a`'s along the trailing axis. Leading extents must match.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (lead_a, ca) = split_channels(a.shape());
    let (lead_b, cb) = split_channels(b.shape());
    if lead_a != lead_b {
        return Err(shape_err!("concat_channels extents differ: {:?} vs {:?}", a.shape(), b.shape()));
    }
    let pixels: usize = lead_a.iter().product();
    let mut out = Vec::with_capacity(pixels * (ca + cb));
    for p in 0..pixels {
        out.extend_from_slice(&a.data()[p * ca..(p + 1) * ca]);
        out.extend_from_slice(&b.data()[p * cb..(p + 1) * cb]);
    }
    let mut shape = lead_a.to_vec();
    shape.push(ca + cb);
    Ok(Tensor::from_op(
        TensorData::new(shape, out)?,
        vec![a.clone(), b.clone()],
        ConcatBackward { ca, cb },
    ))
}

struct BroadcastAddBackward {
    channels: usize,
}

impl<T: Scalar> GradFn<T> for BroadcastAddBackward {
    fn name(&self) -> &'static str {
        "broadcast_add_channels"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let dmap = parents[0].requires_grad().then(|| g.to_vec());
        let dvec = parents[1].requires_grad().then(|| {
            let mut dv = vec![T::zero(); self.channels];
            for px in g.chunks_exact(self.channels) {
                dv.iter_mut().zip(px).for_each(|(d, &v)| *d += v);
            }
            dv
        });
        vec![dmap, dvec]
    }
}

/// Adds a per-channel vector (any shape holding exactly `C` values, e.g.
/// `[C]` or `[1, 1, C]`) at every pixel of an `…×C` map.
pub fn broadcast_add_channels<T: Scalar>(map: &Tensor<T>, vec: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = split_channels(map.shape());
    if vec.numel() != c || vec.shape().last() != Some(&c) {
        return Err(shape_err!(
            "broadcast_add_channels: map has {c} channels, vector shape {:?}",
            vec.shape()
        ));
    }
    if c == 0 {
        return Ok(map.clone());
    }
    let v = vec.data();
    let out: Vec<T> = map
        .data()
        .chunks_exact(c)
        .flat_map(|px| px.iter().zip(v).map(|(&a, &b)| a + b))
        .collect();
    Ok(Tensor::from_op(
        TensorData::new(map.shape().to_vec(), out)?,
        vec![map.clone(), vec.clone()],
        BroadcastAddBackward { channels: c },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
}

struct ElementwiseBackward {
    kind: Elementwise,
}

impl<T: Scalar> GradFn<T> for ElementwiseBackward {
    fn name(&self) -> &'static str {
        match self.kind {
            Elementwise::Add => "add",
            Elementwise::Mul => "mul",
        }
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let (a, b) = (&parents[0], &parents[1]);
        match self.kind {
            Elementwise::Add => vec![
                a.requires_grad().then(|| g.to_vec()),
                b.requires_grad().then(|| g.to_vec()),
            ],
            Elementwise::Mul => vec![
                a.requires_grad()
                    .then(|| g.iter().zip(b.data()).map(|(&gv, &bv)| gv * bv).collect()),
                b.requires_grad()
                    .then(|| g.iter().zip(a.data()).map(|(&gv, &av)| gv * av).collect()),
            ],
        }
    }
}

pub fn elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, kind: Elementwise) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(shape_err!("elementwise shapes differ: {:?} vs {:?}", a.shape(), b.shape()));
    }
    let out = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| match kind {
            Elementwise::Add => x + y,
            Elementwise::Mul => x * y,
        })
        .collect();
    Ok(Tensor::from_op(
        TensorData::new(a.shape().to_vec(), out)?,
        vec![a.clone(), b.clone()],
        ElementwiseBackward { kind },
    ))
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(a, b, Elementwise::Add)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(a, b, Elementwise::Mul)
}

struct NormalizeBackward {
    channels: usize,
}

impl<T: Scalar> GradFn<T> for NormalizeBackward {
    fn name(&self) -> &'static str {
        "normalize_channels"
    }

    fn backward(&self, g: &[T], out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let c = self.channels;
        let mut dx = Vec::with_capacity(g.len());
        let rows = parents[0].data().chunks_exact(c).zip(out.data().chunks_exact(c));
        for ((x, y), gp) in rows.zip(g.chunks_exact(c)) {
            let total: T = x.iter().copied().sum();
            let dot: T = y.iter().zip(gp).map(|(&a, &b)| a * b).sum();
            dx.extend(gp.iter().map(|&gv| (gv - dot) / total));
        }
        vec![Some(dx)]
    }
}

/// Divides every pixel's channel vector by its sum, turning non-negative
/// scores into a per-pixel distribution.
pub fn normalize_channels<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = split_channels(input.shape());
    if c == 0 {
        return Err(shape_err!("normalize_channels over zero channels"));
    }
    let mut out = Vec::with_capacity(input.numel());
    for px in input.data().chunks_exact(c) {
        let total: T = px.iter().copied().sum();
        out.extend(px.iter().map(|&v| v / total));
    }
    Ok(Tensor::from_op(
        TensorData::new(input.shape().to_vec(), out)?,
        vec![input.clone()],
        NormalizeBackward { channels: c },
    ))
}

struct SumBackward;

impl<T: Scalar> GradFn<T> for SumBackward {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![g[0]; parents[0].numel()])]
    }
}

/// Sum of all elements as a one-element tensor.
pub fn sum<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let total: T = input.data().iter().copied().sum();
    Tensor::from_op(TensorData::scalar(total), vec![input.clone()], SumBackward)
}
