import init, { throughput_vs_pb, outage_vs_snr, mc_check } from "./pkg/noisy_arq_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const status = (msg, err = false) => {
  $("status").textContent = msg;
  $("status").className = err ? "err" : "";
};

function system() {
  return {
    proto: $("proto").value,
    short: $("scenario").value === "short",
    n: num("n"),
    rate: num("rate"),
    m: num("m"),
  };
}

// Plots series of [x, y] points on a shared axis box.
function plot(canvas, series, { xlabel, ylog = false }) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 60, R = 20, T = 15, B = 40;
  ctx.clearRect(0, 0, W, H);
  const pts = series.flatMap((s) => s.points);
  const ty = (y) => (ylog ? Math.log10(Math.max(y, 1e-12)) : y);
  const xs = pts.map((p) => p[0]), ys = pts.map((p) => ty(p[1]));
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  let y0 = Math.min(...ys), y1 = Math.max(...ys);
  if (!ylog) y0 = Math.min(0, y0);
  if (y1 - y0 < 1e-12) y1 = y0 + 1;
  const px = (x) => L + ((x - x0) / (x1 - x0 || 1)) * (W - L - R);
  const py = (y) => H - B - ((ty(y) - y0) / (y1 - y0)) * (H - T - B);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(L, T, W - L - R, H - T - B);
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  for (let i = 0; i <= 4; i++) {
    const yv = y0 + ((y1 - y0) * i) / 4;
    const y = H - B - ((H - T - B) * i) / 4;
    ctx.fillText(ylog ? `1e${yv.toFixed(1)}` : yv.toFixed(3), 4, y + 4);
    const xv = x0 + ((x1 - x0) * i) / 4;
    ctx.fillText(xv.toFixed(2), L + ((W - L - R) * i) / 4 - 10, H - B + 16);
  }
  ctx.fillText(xlabel, W / 2 - 20, H - 6);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.points.forEach(([x, y], i) => (i ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y))));
    ctx.stroke();
  }
}

function rows(flat, width) {
  const out = [];
  for (let i = 0; i < flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

function guarded(fn) {
  return () => {
    status("working...");
    // let the status line paint before the synchronous work starts
    setTimeout(() => {
      try {
        const t = performance.now();
        fn();
        status(`done in ${(performance.now() - t).toFixed(0)} ms`);
      } catch (e) {
        status(String(e.message ?? e), true);
      }
    }, 10);
  };
}

function runPb() {
  const s = system();
  const r = rows(throughput_vs_pb(s.proto, s.short, s.n, num("snr"), s.rate, s.m, num("pbmax"), 41), 4);
  plot($("plot-pb"), [
    { color: "#1f77b4", points: r.map((v) => [v[0], v[1]]) },
    { color: "#d62728", points: r.map((v) => [v[0], v[2]]) },
    { color: "#2ca02c", points: r.map((v) => [v[0], v[3]]) },
  ], { xlabel: "p_b" });
}

function runSnr() {
  const s = system();
  const r = rows(outage_vs_snr(s.proto, s.short, s.n, s.rate, s.m, num("pb"), num("snr-lo"), num("snr-hi"), 11), 3);
  plot($("plot-snr"), [
    { color: "#1f77b4", points: r.map((v) => [v[0], v[1]]) },
    { color: "#d62728", points: r.map((v) => [v[0], v[2]]) },
  ], { xlabel: "SNR (dB)", ylog: true });
}

function runMc() {
  const s = system();
  const res = JSON.parse(mc_check(s.proto, s.short, s.n, num("mc-snr"), s.rate, s.m, num("mc-pb"), num("mc-n"), num("mc-seed")));
  const fmt = (x) => x.toPrecision(6);
  $("mc-table").innerHTML =
    "<tr><th></th><th>closed form</th><th>simulated</th><th>std. error</th><th>|z|</th></tr>" +
    res
      .map((r) => {
        const z = r.std_error > 0 ? Math.abs(r.simulated - r.analytic) / r.std_error : 0;
        return `<tr><th>${r.quantity}</th><td>${fmt(r.analytic)}</td><td>${fmt(r.simulated)}</td><td>${r.std_error.toExponential(2)}</td><td>${z.toFixed(2)}</td></tr>`;
      })
      .join("");
}

await init();
$("run-pb").onclick = guarded(runPb);
$("run-snr").onclick = guarded(runSnr);
$("run-mc").onclick = guarded(runMc);
guarded(runPb)();
