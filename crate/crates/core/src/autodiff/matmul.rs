/// `c = beta * c + a @ b` over strided row-major views, `a: [m,k]`, `b: [k,n]`,
/// `c: [m,n]` contiguous.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let span = |rs: isize, cs: isize, r: usize, cc: usize| {
        ((r as isize - 1) * rs + (cc as isize - 1) * cs) as usize + 1
    };
    assert!(a.len() >= span(rsa, csa, m, k));
    assert!(b.len() >= span(rsb, csb, k, n));
    // SAFETY: the asserts above bound every strided access inside the slices,
    // and `c` is an exclusively borrowed contiguous [m,n] buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
