use bistoch::io::{read_grid, write_matrix, Format};
use bistoch_core::Matrix;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(5e-324),
    ]
}

proptest! {
    #[test]
    fn written_grids_read_back_bit_for_bit(
        (rows, cols, data) in (1usize..6, 1usize..6)
            .prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(finite(), r * c))),
        tab in any::<bool>(),
    ) {
        let delimiter = if tab { b'\t' } else { b',' };
        let m = Matrix::from_row_major(rows, cols, data.clone());
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, delimiter).unwrap();
        let (r, c, back) = read_grid(buf.as_slice(), Format { delimiter, header: false }).unwrap();
        prop_assert_eq!((r, c), (rows, cols));
        for (a, b) in back.iter().zip(&data) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
