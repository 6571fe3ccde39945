//! Supervised InfoNCE on a handful of projections, the weighted total, and
//! a finite-difference look at one gradient entry.

use supercl::loss::{positive_set_pcl, supervised_infonce, total_loss, LossWeights, SlicePosition};
use supercl::Tensor;

fn main() -> supercl::Result<()> {
    // two views of three slices, views stacked view-1-first
    let z = Tensor::new(
        vec![6, 3],
        vec![
            1.0, 0.1, 0.0, 0.2, 1.0, 0.1, 0.0, 0.3, 1.0, //
            0.9, 0.2, 0.1, 0.1, 0.9, 0.0, 0.1, 0.2, 1.1,
        ],
    )?;
    let positions: Vec<SlicePosition> = [0.0, 0.05, 0.6].into_iter().map(SlicePosition::new).collect::<Result<_, _>>()?;
    let omega = positive_set_pcl(&positions, 0.1)?;
    print!("{}", omega.to_adjacency_text());

    let r = supervised_infonce(&z, &omega, 0.1)?;
    println!("loss {:.6}, skipped {}", r.loss, r.skipped);

    let h = 1e-6;
    let mut up = z.clone();
    up.data_mut()[4] += h;
    let mut down = z.clone();
    down.data_mut()[4] -= h;
    let fd = (supervised_infonce(&up, &omega, 0.1)?.loss - supervised_infonce(&down, &omega, 0.1)?.loss) / (2.0 * h);
    println!("dL/dz[1][1]: analytic {:.8}, central difference {:.8}", r.grad.data()[4], fd);

    let report = total_loss(Some(r.into()), None, None, LossWeights::default())?;
    println!("{}", report.to_json());
    Ok(())
}
