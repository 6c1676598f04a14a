use crate::error::{Error, Result};

/// Dense `H x W x C` feature map, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Grid3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidDimension(format!(
                "grid dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} grid needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite feature at index {pos}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Feature vector at flat pixel index `p = i * W + j`.
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    pub fn at(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn pixel_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.channels..(p + 1) * self.channels]
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Grid3) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "cannot add {:?} into {:?}",
                other.shape(),
                self.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Circular roll: `out(i, j) = in((i - s_h) mod H, (j - s_w) mod W)`.
    pub fn shift2d(&self, s_h: usize, s_w: usize) -> Result<Grid3> {
        check_shift(self.height, self.width, s_h, s_w)?;
        let data = roll(&self.data, self.height, self.width, self.channels, s_h, s_w);
        Ok(Grid3 { data, ..*self })
    }
}

/// Dense `H x W` depth map in meters with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1 {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl Grid1 {
    pub fn new(height: usize, width: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimension(format!(
                "grid dims must be positive, got {height}x{width}"
            )));
        }
        let n = height * width;
        if values.len() != n || valid.len() != n {
            return Err(Error::Shape(format!(
                "{height}x{width} depth map needs {n} values and mask entries, got {} and {}",
                values.len(),
                valid.len()
            )));
        }
        for (p, (&v, &ok)) in values.iter().zip(&valid).enumerate() {
            if ok && !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!(
                    "valid depth at pixel {p} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            values,
            valid,
        })
    }

    /// All pixels valid.
    pub fn dense(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(height, width, values, vec![true; n])
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::dense(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.width + j]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Circular roll of values and mask together, same convention as [`Grid3::shift2d`].
    pub fn shift2d(&self, s_h: usize, s_w: usize) -> Result<Grid1> {
        check_shift(self.height, self.width, s_h, s_w)?;
        Ok(Grid1 {
            height: self.height,
            width: self.width,
            values: roll(&self.values, self.height, self.width, 1, s_h, s_w),
            valid: roll(&self.valid, self.height, self.width, 1, s_h, s_w),
        })
    }
}

pub fn shift2d_g3(m: &Grid3, s_h: usize, s_w: usize) -> Result<Grid3> {
    m.shift2d(s_h, s_w)
}

pub fn shift2d_g1(m: &Grid1, s_h: usize, s_w: usize) -> Result<Grid1> {
    m.shift2d(s_h, s_w)
}

/// Shift amounts that undo `shift2d(_, s_h, s_w)`.
pub fn inverse_shift(height: usize, width: usize, s_h: usize, s_w: usize) -> (usize, usize) {
    ((height - s_h) % height, (width - s_w) % width)
}

fn check_shift(height: usize, width: usize, s_h: usize, s_w: usize) -> Result<()> {
    if s_h >= height || s_w >= width {
        return Err(Error::InvalidShift {
            s_h,
            s_w,
            height,
            width,
        });
    }
    Ok(())
}

fn roll<T: Copy>(
    src: &[T],
    height: usize,
    width: usize,
    chans: usize,
    s_h: usize,
    s_w: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for i in 0..height {
        let si = (i + height - s_h) % height;
        let row = &src[si * width * chans..(si + 1) * width * chans];
        // Output columns [0, s_w) come from the tail of the source row.
        let split = (width - s_w) * chans;
        out.extend_from_slice(&row[split..]);
        out.extend_from_slice(&row[..split]);
    }
    out
}
