use std::time::Instant;

#[test]
#[ignore]
fn bench_unet() {
    use lmc_core::nn::{UNet, UNetConfig};
    use lmc_core::rng::SeedStream;
    let mut rng = SeedStream::new(1);
    // denoiser-shaped net: 22 input channels (image + t/y encodings), 32x32
    let mut net = UNet::new(UNetConfig{in_channels:22,out_channels:1,levels:3,base_filters:32,final_tanh:false},&mut rng);
    println!("params: {}", net.num_params());
    for batch in [1usize, 2, 4, 8] {
        let x = rng.normal_tensor(&[22, batch, 32, 32]);
        let r = rng.normal_tensor(&[1, batch, 32, 32]);
        // warmup
        let _ = net.forward_train(&x);
        net.backward(&r, false);
        let t0 = Instant::now();
        let iters = 10;
        for _ in 0..iters {
            let _y = net.forward_train(&x);
            net.backward(&r, false);
        }
        let dt = t0.elapsed().as_secs_f64() / iters as f64;
        let t1 = Instant::now();
        for _ in 0..iters { let _y = net.forward_infer(&x); }
        let dti = t1.elapsed().as_secs_f64() / iters as f64;
        println!("batch={batch}: fwd+bwd {:.1} ms/step ({:.2} ms/img), infer {:.1} ms ({:.2} ms/img)",
                 dt*1e3, dt*1e3/batch as f64, dti*1e3, dti*1e3/batch as f64);
    }
    // 20k steps budget estimate
}
