//! C source emission.
//!
//! The header carries the dimensions, the entry points and, inside an
//! `NF_NET_IMPLEMENTATION` block, every weight and neuron parameter as a
//! `static const float` array of hexadecimal literals. Weight matrices are
//! stored column-major so that one presynaptic column is contiguous, the
//! layout the event-driven kernel walks. The kernel file holds the state
//! buffers and `nf_init` / `nf_reset` / `nf_step`.
//!
//! Every arithmetic expression mirrors the reference runtime operation for
//! operation: accumulators start at zero and add columns in ascending index
//! order, and the file disables floating-point contraction so no product is
//! fused into an FMA.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::snn::{Mode, NetworkSpec, SubNetwork};

use super::{ExportArtifact, Manifest, HEADER_FILE};

/// Exact C99 hexadecimal literal of an `f32`.
pub fn hex_float(v: f32) -> String {
    let bits = v.to_bits();
    let sign = if bits >> 31 == 1 { "-" } else { "" };
    let exp = ((bits >> 23) & 0xff) as i32;
    let frac = bits & 0x7f_ffff;
    // 23 fraction bits shifted into 6 hex digits.
    let digits = frac << 1;
    match exp {
        0 if frac == 0 => format!("{sign}0x0p+0f"),
        0 => format!("{sign}0x0.{digits:06x}p-126f"),
        _ => format!("{sign}0x1.{digits:06x}p{:+}f", exp - 127),
    }
}

fn check_finite(spec: &NetworkSpec) -> Result<()> {
    for (name, net) in [("estimator", &spec.estimator), ("controller", &spec.controller)] {
        let mut values = net
            .layers
            .iter()
            .flat_map(|l| {
                l.w_in
                    .as_slice()
                    .iter()
                    .chain(l.w_rec.iter().flat_map(|w| w.as_slice()))
                    .chain(&l.params.alpha)
                    .chain(&l.params.beta)
                    .chain(&l.params.theta)
            })
            .chain(net.readout.w_out.as_slice())
            .chain(&net.input_scale)
            .chain(&net.output_scale);
        if values.any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} parameters; emission refused")));
        }
    }
    Ok(())
}

fn array(out: &mut String, name: &str, values: impl ExactSizeIterator<Item = f32>) {
    let n = values.len();
    let _ = write!(out, "static const float {name}[{n}] = {{");
    for (k, v) in values.enumerate() {
        if k % 4 == 0 {
            out.push_str("\n   ");
        }
        let _ = write!(out, " {},", hex_float(v));
    }
    out.push_str("\n};\n");
}

fn column_major(w: &crate::matrix::Matrix<f32>) -> impl ExactSizeIterator<Item = f32> + '_ {
    let (rows, cols) = (w.rows(), w.cols());
    (0..rows * cols).map(move |k| w.get(k % rows, k / rows))
}

/// Identifier prefixes of the two subnetworks.
const NETS: [&str; 2] = ["est", "ctl"];

fn subnets(spec: &NetworkSpec) -> [&SubNetwork<f32>; 2] {
    [&spec.estimator, &spec.controller]
}

fn header(spec: &NetworkSpec, mode: Mode) -> String {
    let mut h = String::new();
    h.push_str("/* Generated by neuroflap. Do not edit. */\n");
    h.push_str("#ifndef NF_NET_H\n#define NF_NET_H\n\n");
    let _ = writeln!(h, "/* mode: {} */", mode.as_str());
    let ref_dim = spec.ref_dim();
    let _ = writeln!(h, "#define NF_IMU_DIM {}", spec.estimator.inputs());
    let _ = writeln!(h, "#define NF_REF_DIM {ref_dim}");
    let _ = writeln!(h, "#define NF_STATE_DIM {}", spec.estimator.outputs());
    let _ = writeln!(h, "#define NF_CONTROL_DIM {}", spec.controller.outputs());
    h.push_str("#define NF_INPUT_DIM (NF_IMU_DIM + NF_REF_DIM)\n");
    h.push_str("#define NF_OUTPUT_DIM (NF_STATE_DIM + NF_CONTROL_DIM)\n");
    let layers = spec.estimator.layers.len() + spec.controller.layers.len();
    let _ = writeln!(h, "#define NF_NUM_LAYERS {layers}");
    for (p, net) in NETS.iter().zip(subnets(spec)) {
        for (l, layer) in net.layers.iter().enumerate() {
            let _ = writeln!(h, "#define NF_{}_L{l}_SIZE {}", p.to_uppercase(), layer.size());
        }
    }
    h.push_str(
        "\n/* Zero all state. Call once before the first step. */\n\
         void nf_init(void);\n\
         /* Zero all state. */\n\
         void nf_reset(void);\n\
         /* One 100 Hz tick. inputs: raw IMU (gyro rad/s, accel m/s^2) then the\n   \
         reference/measurement block. outputs: state estimate then control. */\n\
         void nf_step(const float inputs[NF_INPUT_DIM], float outputs[NF_OUTPUT_DIM]);\n\
         /* Spikes emitted by each layer during the last tick, estimator first. */\n\
         void nf_spike_counts(unsigned counts[NF_NUM_LAYERS]);\n\n",
    );
    h.push_str("#ifdef NF_NET_IMPLEMENTATION\n");
    h.push_str("/* Weight matrices are column-major: column j holds the synapses of\n   presynaptic input j. */\n");
    for (p, net) in NETS.iter().zip(subnets(spec)) {
        for (l, layer) in net.layers.iter().enumerate() {
            array(&mut h, &format!("nf_{p}_l{l}_w_in"), column_major(&layer.w_in));
            if let Some(w) = &layer.w_rec {
                array(&mut h, &format!("nf_{p}_l{l}_w_rec"), column_major(w));
            }
            array(&mut h, &format!("nf_{p}_l{l}_alpha"), layer.params.alpha.iter().copied());
            array(&mut h, &format!("nf_{p}_l{l}_beta"), layer.params.beta.iter().copied());
            array(&mut h, &format!("nf_{p}_l{l}_theta"), layer.params.theta.iter().copied());
        }
        array(&mut h, &format!("nf_{p}_w_out"), column_major(&net.readout.w_out));
        array(&mut h, &format!("nf_{p}_in_scale"), net.input_scale.iter().copied());
        array(&mut h, &format!("nf_{p}_out_scale"), net.output_scale.iter().copied());
    }
    h.push_str("#endif /* NF_NET_IMPLEMENTATION */\n\n#endif /* NF_NET_H */\n");
    h
}

/// `acc = W x` for a continuous input vector.
fn emit_dense_product(k: &mut String, acc: &str, w: &str, x: &str, rows: usize, cols: usize) {
    let _ = writeln!(k, "    for (i = 0; i < {rows}; ++i) {acc}[i] = 0.0f;");
    let _ = writeln!(k, "    for (j = 0; j < {cols}; ++j) {{");
    let _ = writeln!(k, "        const float *col = {w} + j * {rows};");
    let _ = writeln!(k, "        const float xj = {x}[j];");
    let _ = writeln!(k, "        for (i = 0; i < {rows}; ++i) {acc}[i] += col[i] * xj;");
    k.push_str("    }\n");
}

/// `acc = W s` for a spike vector `s` with active list `act` of length `n_act`.
fn emit_spike_product(k: &mut String, mode: Mode, acc: &str, w: &str, spikes: &str, act: &str, rows: usize, cols: usize) {
    match mode {
        Mode::Dense => emit_dense_product(k, acc, w, spikes, rows, cols),
        Mode::EventDriven => {
            let _ = writeln!(k, "    for (i = 0; i < {rows}; ++i) {acc}[i] = 0.0f;");
            let _ = writeln!(k, "    for (a = 0; a < {act}_n; ++a) {{");
            let _ = writeln!(k, "        const float *col = {w} + {act}[a] * {rows};");
            let _ = writeln!(k, "        for (i = 0; i < {rows}; ++i) {acc}[i] += col[i];");
            k.push_str("    }\n");
        }
    }
}

fn kernel(spec: &NetworkSpec, mode: Mode) -> String {
    let mut k = String::new();
    k.push_str("/* Generated by neuroflap. Do not edit. */\n");
    k.push_str("#pragma STDC FP_CONTRACT OFF\n");
    k.push_str("#define NF_NET_IMPLEMENTATION\n");
    let _ = writeln!(k, "#include \"{HEADER_FILE}\"\n");

    // State buffers: syn current, membrane, spikes, active list per layer.
    let mut layer_ids = Vec::new();
    for (p, net) in NETS.iter().zip(subnets(spec)) {
        for (l, layer) in net.layers.iter().enumerate() {
            let id = format!("nf_{p}_l{l}");
            let n = layer.size();
            let _ = writeln!(k, "static float {id}_i[{n}];");
            let _ = writeln!(k, "static float {id}_v[{n}];");
            let _ = writeln!(k, "static float {id}_s[{n}];");
            let _ = writeln!(k, "static unsigned {id}_act[{n}];");
            let _ = writeln!(k, "static unsigned {id}_act_n;");
            layer_ids.push((id, n));
        }
    }
    let widest = layer_ids.iter().map(|(_, n)| *n).max().unwrap_or(1);
    let widest_in = spec.estimator.inputs().max(spec.controller.inputs());
    let widest_out = spec.estimator.outputs().max(spec.controller.outputs());
    let _ = writeln!(k, "static float nf_in_acc[{widest}];");
    let _ = writeln!(k, "static float nf_rec_acc[{widest}];");
    let _ = writeln!(k, "static float nf_x[{widest_in}];");
    let _ = writeln!(k, "static float nf_y[{widest_out}];");
    let _ = writeln!(k, "static float nf_ctl_in[{}];\n", spec.controller.inputs());

    k.push_str("void nf_reset(void)\n{\n    unsigned i;\n");
    for (id, n) in &layer_ids {
        let _ = writeln!(
            k,
            "    for (i = 0; i < {n}; ++i) {{ {id}_i[i] = 0.0f; {id}_v[i] = 0.0f; {id}_s[i] = 0.0f; }}"
        );
        let _ = writeln!(k, "    {id}_act_n = 0;");
    }
    k.push_str("}\n\nvoid nf_init(void)\n{\n    nf_reset();\n}\n\n");

    k.push_str("void nf_spike_counts(unsigned counts[NF_NUM_LAYERS])\n{\n");
    for (c, (id, _)) in layer_ids.iter().enumerate() {
        let _ = writeln!(k, "    counts[{c}] = {id}_act_n;");
    }
    k.push_str("}\n\n");

    for (p, net) in NETS.iter().zip(subnets(spec)) {
        let _ = writeln!(k, "/* Scaled input in nf_x, scaled output to nf_y. */");
        let _ = writeln!(k, "static void nf_{p}_advance(void)\n{{");
        k.push_str("    unsigned i, j, a;\n    (void)j;\n    (void)a;\n");
        for (l, layer) in net.layers.iter().enumerate() {
            let id = format!("nf_{p}_l{l}");
            let n = layer.size();
            let _ = writeln!(k, "    /* layer {l}: {} {n} */", layer.kind.as_str());
            if l == 0 {
                emit_dense_product(&mut k, "nf_in_acc", &format!("{id}_w_in"), "nf_x", n, layer.inputs());
            } else {
                let below = format!("nf_{p}_l{}", l - 1);
                emit_spike_product(
                    &mut k,
                    mode,
                    "nf_in_acc",
                    &format!("{id}_w_in"),
                    &format!("{below}_s"),
                    &format!("{below}_act"),
                    n,
                    layer.inputs(),
                );
            }
            let recurrent = layer.w_rec.is_some();
            if recurrent {
                emit_spike_product(
                    &mut k,
                    mode,
                    "nf_rec_acc",
                    &format!("{id}_w_rec"),
                    &format!("{id}_s"),
                    &format!("{id}_act"),
                    n,
                    n,
                );
            }
            let _ = writeln!(k, "    {id}_act_n = 0;");
            let _ = writeln!(k, "    for (i = 0; i < {n}; ++i) {{");
            let _ = writeln!(k, "        const float cur = {id}_i[i];");
            let _ = writeln!(
                k,
                "        const float v = {id}_beta[i] * {id}_v[i] * (1.0f - {id}_s[i]) + cur;"
            );
            let _ = writeln!(k, "        float next = {id}_alpha[i] * cur;");
            // Same summation order as the reference runtime.
            if l > 0 {
                k.push_str("        next += nf_in_acc[i];\n");
            }
            if recurrent {
                k.push_str("        next += nf_rec_acc[i];\n");
            }
            if l == 0 {
                k.push_str("        next += nf_in_acc[i];\n");
            }
            let _ = writeln!(k, "        {id}_v[i] = v;");
            let _ = writeln!(k, "        {id}_i[i] = next;");
            let _ = writeln!(k, "        if (v >= {id}_theta[i]) {{");
            let _ = writeln!(k, "            {id}_s[i] = 1.0f;");
            let _ = writeln!(k, "            {id}_act[{id}_act_n++] = i;");
            k.push_str("        } else {\n");
            let _ = writeln!(k, "            {id}_s[i] = 0.0f;");
            k.push_str("        }\n    }\n");
        }
        let top = format!("nf_{p}_l{}", net.layers.len() - 1);
        emit_spike_product(
            &mut k,
            mode,
            "nf_y",
            &format!("nf_{p}_w_out"),
            &format!("{top}_s"),
            &format!("{top}_act"),
            net.outputs(),
            net.readout.w_out.cols(),
        );
        k.push_str("}\n\n");
    }

    let est_in = spec.estimator.inputs();
    let est_out = spec.estimator.outputs();
    let ref_dim = spec.ref_dim();
    let ctl_in = spec.controller.inputs();
    let ctl_out = spec.controller.outputs();
    k.push_str("void nf_step(const float inputs[NF_INPUT_DIM], float outputs[NF_OUTPUT_DIM])\n{\n");
    k.push_str("    unsigned c;\n");
    let _ = writeln!(k, "    for (c = 0; c < {est_in}; ++c) nf_x[c] = inputs[c] * nf_est_in_scale[c];");
    k.push_str("    nf_est_advance();\n");
    let _ = writeln!(k, "    for (c = 0; c < {est_out}; ++c) outputs[c] = nf_y[c] / nf_est_out_scale[c];");
    let _ = writeln!(k, "    for (c = 0; c < {ref_dim}; ++c) nf_ctl_in[c] = inputs[{est_in} + c];");
    let _ = writeln!(k, "    for (c = 0; c < {est_out}; ++c) nf_ctl_in[{ref_dim} + c] = outputs[c];");
    let _ = writeln!(k, "    for (c = 0; c < {ctl_in}; ++c) nf_x[c] = nf_ctl_in[c] * nf_ctl_in_scale[c];");
    k.push_str("    nf_ctl_advance();\n");
    let _ = writeln!(
        k,
        "    for (c = 0; c < {ctl_out}; ++c) outputs[{est_out} + c] = nf_y[c] / nf_ctl_out_scale[c];"
    );
    k.push_str("}\n");
    k
}

/// Compile `spec` into a static C source pair and its manifest. Refuses
/// specs holding NaN or infinite values.
pub fn emit(spec: &NetworkSpec, mode: Mode) -> Result<ExportArtifact> {
    check_finite(spec)?;
    spec.validate()?;
    let header_text = header(spec, mode);
    let kernel_text = kernel(spec, mode);
    let manifest = Manifest::new(spec, mode, &header_text, &kernel_text);
    Ok(ExportArtifact {
        header_text,
        kernel_text,
        manifest,
    })
}
