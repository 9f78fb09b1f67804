//! Thin safe wrapper over `matrixmultiply::dgemm`.

/// Read-only matrix view with explicit logical dims and an optional transpose.
///
/// `data` is stored row-major with its *stored* dims; when `transposed` is set the
/// view presents the transpose, i.e. a stored `cols × rows` block read as
/// `rows × cols`.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> MatRef<'a> {
    /// View of logical size `rows × cols`. If `transposed`, `data` holds a row-major
    /// `cols × rows` matrix.
    pub fn new(data: &'a [f64], rows: usize, cols: usize, transposed: bool) -> Self {
        assert_eq!(data.len(), rows * cols, "MatRef size mismatch");
        let (rs, cs) = if transposed {
            (1, rows as isize)
        } else {
            (cols as isize, 1)
        };
        MatRef {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c ← a·b + beta·c` with `c` row-major `a.rows × b.cols`.
pub fn gemm(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64], beta: f64) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(c.len(), m * n, "gemm output size mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: dims and strides describe in-bounds accesses of the three slices,
    // checked by the assertions above and in `MatRef::new`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
