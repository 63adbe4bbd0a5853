//! Minimal static SVG rendering: one polyline chart per component spectrum.

use spectral_lvm::SourceSpectrum;

const PANEL_WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 140.0;
const MARGIN_LEFT: f64 = 50.0;
const MARGIN_RIGHT: f64 = 15.0;
const MARGIN_TOP: f64 = 22.0;
const MARGIN_BOTTOM: f64 = 24.0;

/// Renders the latent source spectra as stacked line charts.
pub fn render_spectra(spectra: &[SourceSpectrum]) -> String {
    let total_height = PANEL_HEIGHT * spectra.len() as f64;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PANEL_WIDTH}\" \
         height=\"{total_height}\" viewBox=\"0 0 {PANEL_WIDTH} {total_height}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    for (i, spectrum) in spectra.iter().enumerate() {
        let top = PANEL_HEIGHT * i as f64;
        let plot_w = PANEL_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let max_power = spectrum.power.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let n = spectrum.power.len().max(2);

        let points: Vec<String> = spectrum
            .power
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let x = MARGIN_LEFT + plot_w * k as f64 / (n - 1) as f64;
                let y = top + MARGIN_TOP + plot_h * (1.0 - p / max_power);
                format!("{x:.2},{y:.2}")
            })
            .collect();

        let axis_y = top + MARGIN_TOP + plot_h;
        out.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{axis_y:.2}\" x2=\"{:.2}\" y2=\"{axis_y:.2}\" \
             stroke=\"black\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        out.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{:.2}\" x2=\"{MARGIN_LEFT}\" y2=\"{axis_y:.2}\" \
             stroke=\"black\" stroke-width=\"1\"/>\n",
            top + MARGIN_TOP
        ));
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1\"/>\n",
            points.join(" ")
        ));

        let axis_label = match &spectrum.frequency_hz {
            Some(freqs) => format!(
                "frequency 0..{:.3} Hz",
                freqs.last().copied().unwrap_or(0.0)
            ),
            None => format!("bin 0..{}", n - 1),
        };
        out.push_str(&format!(
            "<text x=\"{MARGIN_LEFT}\" y=\"{:.2}\" font-family=\"monospace\" \
             font-size=\"11\">component {} ({axis_label}, peak power {max_power:.4e})</text>\n",
            top + 14.0,
            i + 1
        ));
    }
    out.push_str("</svg>\n");
    out
}
