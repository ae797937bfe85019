use std::fs;
use std::io::Write;
use std::path::PathBuf;

use abstain::io::{read_ppm, write_pgm, write_ppm};
use abstain::pseudomask::{apply_mask, grabcut, GrabCutParams, MorphOrder, Rect};
use abstain::{report, rng, Error};
use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::{usage, Ctx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Order {
    OpenClose,
    CloseOpen,
}

#[derive(Args)]
pub struct PseudomaskArgs {
    /// Directory of PPM images. Masks go to --out as `<stem>.pgm`, alongside
    /// `report.json`.
    #[arg(long = "in")]
    input: PathBuf,
    /// GrabCut rounds.
    #[arg(long, default_value_t = 5)]
    iters: usize,
    /// Gaussian components per colour model.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Smoothness weight.
    #[arg(long, default_value_t = 50.0)]
    lambda: f64,
    /// EM iterations per colour-model update.
    #[arg(long, default_value_t = 10)]
    em_iters: usize,
    /// Opening radius (0 disables).
    #[arg(long, default_value_t = 1)]
    open: usize,
    /// Closing radius (0 disables).
    #[arg(long, default_value_t = 1)]
    close: usize,
    #[arg(long, value_enum, default_value = "open-close")]
    order: Order,
    /// Also write `<stem>.masked.ppm` with the background blanked.
    #[arg(long)]
    apply: bool,
}

#[derive(Serialize)]
struct ImageReport {
    name: String,
    width: usize,
    height: usize,
    rect: Rect,
    degenerate: bool,
    energy: Vec<f64>,
    foreground_fraction: f64,
}

#[derive(Serialize)]
struct PseudomaskReport {
    params: GrabCutParams,
    images: Vec<ImageReport>,
    degenerate_count: usize,
}

pub fn pseudomask(ctx: &Ctx, a: PseudomaskArgs) -> anyhow::Result<()> {
    let out = ctx.out.clone().ok_or_else(|| usage("pseudomask needs --out <dir>"))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let params = GrabCutParams {
        iterations: a.iters,
        components: a.k,
        lambda: a.lambda,
        em_iterations: a.em_iters,
        open_radius: a.open,
        close_radius: a.close,
        order: match a.order {
            Order::OpenClose => MorphOrder::OpenThenClose,
            Order::CloseOpen => MorphOrder::CloseThenOpen,
        },
    };
    params.validate()?;
    let mut names: Vec<String> = fs::read_dir(&a.input)
        .with_context(|| format!("listing {}", a.input.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ppm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    let mut images = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let img = read_ppm(a.input.join(name))?;
        let result = grabcut(&img, rng::derive(ctx.seed, i as u64), &params)?;
        let mask = result.cleaned(&params);
        let stem = name.trim_end_matches(".ppm");
        write_pgm(out.join(format!("{stem}.pgm")), &mask)?;
        if a.apply {
            write_ppm(out.join(format!("{stem}.masked.ppm")), &apply_mask(&img, &mask)?)?;
        }
        images.push(ImageReport {
            name: name.clone(),
            width: img.width(),
            height: img.height(),
            rect: result.rect,
            degenerate: result.degenerate,
            energy: result.energy,
            foreground_fraction: mask.count() as f64 / (img.width() * img.height()) as f64,
        });
    }
    let degenerate_count = images.iter().filter(|r| r.degenerate).count();
    let value = report::envelope("pseudomask", ctx.seed, &PseudomaskReport { params, images, degenerate_count })?;
    let text = report::render(&value);
    fs::write(out.join("report.json"), &text).context("writing report.json")?;
    std::io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}
