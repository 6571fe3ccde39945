//! Write a tensor as NPY, read it back, and show the header bytes.

use supercl::npy::{read_npy, write_npy, Precision};
use supercl::Tensor;

fn main() -> supercl::Result<()> {
    let t = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.25, 3.0, 1e-3, 7.0])?;
    for precision in [Precision::F8, Precision::F4] {
        let bytes = write_npy(&t, precision);
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        println!("{precision:?}: {} bytes, header {:?}", bytes.len(), String::from_utf8_lossy(&bytes[10..10 + header_len]).trim_end());
        let back = read_npy(&bytes)?;
        println!("  shape {:?}, data {:?}", back.shape(), back.data());
        assert_eq!(write_npy(&back, precision), bytes);
    }
    Ok(())
}
