use std::process::ExitCode;

use cradle_core::augment::{filter_watermarks, render_marks, segment_to_marks, ComponentSegmenter, MarkStyle, Template};

use super::{config, failed, CmdResult};
use crate::{AugmentArgs, Style};

pub fn augment(args: &AugmentArgs) -> CmdResult {
    if args.quant_step == 0 {
        return Err(config("--quant-step must be positive"));
    }
    let style = match args.style {
        Style::Standard => MarkStyle::Standard,
        Style::Uniform => MarkStyle::Uniform,
    };
    let watermark = match &args.watermark {
        Some(p) => Some(Template::new("watermark", image::open(p).map_err(|e| config(format!("{}: {e}", p.display())))?.to_rgb8())),
        None => None,
    };
    std::fs::create_dir_all(&args.out).map_err(failed)?;
    let seg = ComponentSegmenter { quant_step: args.quant_step, min_area: args.min_area };
    for input in &args.inputs {
        let frame = image::open(input).map_err(|e| config(format!("{}: {e}", input.display())))?.to_rgb8();
        let mut marks = segment_to_marks(&frame, &seg).map_err(failed)?;
        if let Some(w) = &watermark {
            marks = filter_watermarks(&marks, &frame, w);
        }
        let rendered = render_marks(&frame, &marks, style);
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "frame".into());
        let out = args.out.join(format!("{stem}.marks.png"));
        rendered.image.save(&out).map_err(|e| failed(format!("{}: {e}", out.display())))?;
        println!("{} -> {} ({} marks)", input.display(), out.display(), marks.len());
        print!("{}", marks.to_text());
    }
    Ok(ExitCode::SUCCESS)
}
