use mrom::net::{assemble, init_params, AutoencoderSpec, InitScheme, ScalingOperator};
use mrom::tensor::{ops, ConvSpec, Tensor};
use std::time::Instant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rt(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // burgers encoder layer shapes: (cin, n, cout, k, s)
    let layers = [(1usize, 256usize, 8usize, 25usize, 2usize), (8, 128, 16, 25, 4), (16, 32, 32, 25, 4), (32, 8, 64, 25, 4)];
    for (cin, n, cout, k, s) in layers {
        let spec = ConvSpec::new_1d(cin, cout, k, s);
        let x = rt(vec![cin, n], &mut rng);
        let f = rt(spec.filter_shape(), &mut rng);
        let b = rt(vec![cout], &mut rng);
        let m = n / s;
        let reps = 2000;
        let t = Instant::now();
        for _ in 0..reps { std::hint::black_box(ops::conv_forward(&x, &spec, &f, &b).unwrap()); }
        let fwd = t.elapsed().as_secs_f64() / reps as f64;
        let dout = rt(vec![cout, m], &mut rng);
        let t = Instant::now();
        for _ in 0..reps { std::hint::black_box(ops::conv_adj_input(&dout, &spec, &f, &[n])); }
        let adj = t.elapsed().as_secs_f64() / reps as f64;
        let t = Instant::now();
        for _ in 0..reps { std::hint::black_box(ops::conv_grad_filters(&dout, &x, &spec)); }
        let gf = t.elapsed().as_secs_f64() / reps as f64;
        let flops = 2.0 * (cout * m * k * cin) as f64;
        println!("conv {cin}x{n}->{cout}x{m} k{k}: fwd {:.1}us ({:.2} GF/s) adj {:.1}us gradf {:.1}us",
            fwd*1e6, flops/fwd/1e9, adj*1e6, gf*1e6);
    }
    // full training batch
    let spec = AutoencoderSpec::burgers(256, 1, 5).unwrap();
    let params = init_params(&spec, InitScheme::Xavier, 1);
    let model = assemble(spec, params, ScalingOperator::identity(1)).unwrap();
    let xs: Vec<Vec<f64>> = (0..20).map(|_| (0..256).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let batch: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let t = Instant::now();
    let reps = 20;
    for _ in 0..reps { std::hint::black_box(model.batch_loss_and_grad(&batch).unwrap()); }
    let per_batch = t.elapsed().as_secs_f64() / reps as f64;
    println!("batch(20) loss+grad: {:.1} ms -> epoch(113 batches) ~{:.2} s", per_batch*1e3, per_batch*113.0);
    // single decode and encode
    let xi = vec![0.1, 0.2, -0.3, 0.4, 0.0];
    let t = Instant::now();
    for _ in 0..2000 { std::hint::black_box(model.decode(&xi).unwrap()); }
    println!("decode: {:.1} us", t.elapsed().as_secs_f64()/2000.0*1e6);
    let t = Instant::now();
    for _ in 0..2000 { std::hint::black_box(model.decode_with_jvp(&xi, &[1.0,0.0,0.0,0.0,0.0]).unwrap()); }
    println!("decode_jvp: {:.1} us", t.elapsed().as_secs_f64()/2000.0*1e6);
}
