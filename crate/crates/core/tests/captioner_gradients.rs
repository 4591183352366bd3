use alignprobe::captioner::{ce_loss_and_grad, Caption, CaptionerParams, Specials};
use alignprobe::corpus::ImageFeature;
use alignprobe::nn::ParamTensors;
use alignprobe::rng::rng_from_seed;

fn loss(p: &CaptionerParams, batch: &[(ImageFeature, Caption)]) -> f64 {
    ce_loss_and_grad(p, batch).unwrap().0
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let specials = Specials { bos: 0, eos: 1, masked: vec![0] };
    let p = CaptionerParams::random(5, 4, 3, specials, &mut rng_from_seed(11));
    let batch = vec![
        (ImageFeature::new(0, vec![0.7, -0.2, 0.4]), Caption(vec![0, 3, 2, 1])),
        (ImageFeature::new(1, vec![-0.5, 0.9, 0.1]), Caption(vec![0, 4, 4, 1])),
    ];
    let (_, grad) = ce_loss_and_grad(&p, &batch).unwrap();
    let analytic = grad.flat();
    let mut worst = 0.0f64;
    for i in 0..p.num_params() {
        let eval = |d: f64| {
            let mut q = p.clone();
            q.with_flat_mut(i, |v| *v += d);
            loss(&q, &batch)
        };
        let fd = (eval(1e-5) - eval(-1e-5)) / 2e-5;
        // A step of 1e-5 resolves differences only down to about 1e-10, so
        // denominators are floored well above that.
        let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(rel);
        assert!(rel < 1e-4, "coordinate {i}: fd {fd} analytic {}", analytic[i]);
    }
    println!("worst relative error {worst:e}");
}
