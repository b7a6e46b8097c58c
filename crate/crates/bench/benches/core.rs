use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mula_bench::{pattern_image, pattern_tensor};
use mulagan::diffcore::ConvSpec;
use mulagan::metrics::{niqe_score, ssim, uciqe, uiqm};
use mulagan::{NiqeModel, Tape, TrainConfig};

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d_3x3");
    for (ch, side) in [(32, 64), (64, 32), (256, 8)] {
        let x = pattern_tensor(&[2, ch, side, side]);
        let w = pattern_tensor(&[ch, ch, 3, 3]);
        g.bench_with_input(BenchmarkId::new("fwd_bwd", format!("{ch}c_{side}px")), &(), |b, _| {
            b.iter(|| {
                let mut t = Tape::new();
                let xv = t.leaf(x.clone().with_grad());
                let wv = t.leaf(w.clone().with_grad());
                let y = t.conv2d(xv, wv, None, ConvSpec::new(1, 1)).unwrap();
                let s = t.sum(y).unwrap();
                t.backward(s).unwrap();
            })
        });
    }
    g.finish();
}

fn generator(c: &mut Criterion) {
    let mut nets = mulagan::trainer::init_params(&TrainConfig::default(), 0).unwrap();
    let x = pattern_tensor(&[1, 3, 64, 64]);
    c.bench_function("generator_enhance_64px", |b| {
        b.iter(|| nets.generator.enhance(&x).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let (a, b) = (
        pattern_image(256, 256),
        pattern_image(256, 256).data().iter().rev().copied().collect::<Vec<_>>(),
    );
    let b = mulagan::RgbImage::new(256, 256, b).unwrap();
    let model = NiqeModel::bundled().unwrap();
    let mut g = c.benchmark_group("metrics_256px");
    g.bench_function("ssim", |bch| bch.iter(|| ssim(&a, &b).unwrap()));
    g.bench_function("uiqm", |bch| bch.iter(|| uiqm(&a)));
    g.bench_function("uciqe", |bch| bch.iter(|| uciqe(&a)));
    g.bench_function("niqe", |bch| bch.iter(|| niqe_score(&a, &model).unwrap()));
    g.finish();
}

criterion_group!(benches, conv, generator, metrics);
criterion_main!(benches);
