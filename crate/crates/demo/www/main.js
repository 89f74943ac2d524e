import init, { edge_curve, mae_vs_l, basis } from "./pkg/lutkan_demo.js";

const $ = (id) => document.getElementById(id);
const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

function setup(canvas) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  ctx.clearRect(0, 0, w, h);
  return { ctx, w, h };
}

function frame(canvas, xr, yr, { logX = false, logY = false } = {}) {
  const { ctx, w, h } = setup(canvas);
  const pad = { l: 60, r: 12, t: 10, b: 28 };
  const f = (log) => (log ? Math.log10 : (v) => v);
  const fx = f(logX), fy = f(logY);
  const [x0, x1] = xr.map(fx), [y0, y1] = yr.map(fy);
  const sx = (x) => pad.l + ((fx(x) - x0) / (x1 - x0 || 1)) * (w - pad.l - pad.r);
  const sy = (y) => h - pad.b - ((fy(y) - y0) / (y1 - y0 || 1)) * (h - pad.t - pad.b);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  ctx.fillStyle = "#444";
  ctx.font = "11px system-ui";
  for (let i = 0; i <= 4; i++) {
    const xv = logX ? 10 ** (x0 + ((x1 - x0) * i) / 4) : xr[0] + ((xr[1] - xr[0]) * i) / 4;
    const yv = logY ? 10 ** (y0 + ((y1 - y0) * i) / 4) : yr[0] + ((yr[1] - yr[0]) * i) / 4;
    ctx.fillText(xv.toPrecision(3), sx(xv) - 12, h - 10);
    ctx.fillText(yv.toPrecision(3), 4, sy(yv) + 4);
  }
  return { ctx, sx, sy, w, h, pad };
}

function line(p, xs, ys, color, width = 1.5) {
  p.ctx.strokeStyle = color;
  p.ctx.lineWidth = width;
  p.ctx.beginPath();
  xs.forEach((x, i) => (i ? p.ctx.lineTo(p.sx(x), p.sy(ys[i])) : p.ctx.moveTo(p.sx(x), p.sy(ys[i]))));
  p.ctx.stroke();
}

function extent(...arrays) {
  let lo = Infinity, hi = -Infinity;
  for (const a of arrays) for (const v of a) if (Number.isFinite(v)) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const m = (hi - lo) * 0.05 || 0.1;
  return [lo - m, hi + m];
}

function drawCurve() {
  const r = Number($("c-range").value);
  $("c-range-v").textContent = r.toFixed(1);
  const d = edge_curve(
    Number($("c-seed").value), Number($("c-edge").value), Number($("c-L").value),
    $("c-scheme").value, $("c-boundary").value, $("c-policy").value, -r, r, 801,
  );
  const xs = [], ref = [], lut = [], inside = [];
  for (let i = 0; i < d.length; i += 4) { xs.push(d[i]); ref.push(d[i + 1]); lut.push(d[i + 2]); inside.push(d[i + 3]); }
  const p = frame($("curve"), [-r, r], extent(ref, lut));
  p.ctx.fillStyle = "#f3d9d9";
  xs.forEach((x, i) => {
    if (!inside[i]) {
      const x1 = xs[Math.min(i + 1, xs.length - 1)];
      p.ctx.fillRect(p.sx(x), p.pad.t, Math.max(1, p.sx(x1) - p.sx(x)), p.h - p.pad.t - p.pad.b);
    }
  });
  line(p, xs, ref, "#1f77b4", 2);
  line(p, xs, lut, "#d62728", 1.2);
}

function drawMae() {
  const d = mae_vs_l(Number($("m-seed").value), $("m-scheme").value, Number($("m-n").value));
  const ls = [], mae = [], maxabs = [];
  for (let i = 0; i < d.length; i += 3) { ls.push(d[i]); mae.push(d[i + 1]); maxabs.push(d[i + 2]); }
  const [lo, hi] = [Math.min(...mae) / 1.5, Math.max(...maxabs) * 1.5];
  const p = frame($("mae"), [ls[0], ls[ls.length - 1]], [lo, hi], { logX: true, logY: true });
  line(p, ls, mae, "#1f77b4", 2);
  line(p, ls, maxabs, "#ff7f0e", 2);
  let rows = "<tr><th>L</th><th>MAE</th><th>MaxAbs</th><th>MAE(L/2) / MAE(L)</th></tr>";
  ls.forEach((l, i) => {
    const ratio = i ? (mae[i - 1] / mae[i]).toFixed(2) : "";
    rows += `<tr><td>${l}</td><td>${mae[i].toExponential(3)}</td><td>${maxabs[i].toExponential(3)}</td><td>${ratio}</td></tr>`;
  });
  $("mae-table").innerHTML = rows;
}

function drawBasis() {
  const K = Number($("b-K").value), deg = Number($("b-p").value);
  $("b-K-v").textContent = K;
  $("b-p-v").textContent = deg;
  const n = 601;
  const d = basis(K, deg, n);
  const xs = Array.from(d.subarray(0, n));
  const p = frame($("basis"), [xs[0], xs[n - 1]], [-0.05, 1.05]);
  for (let b = 1; b < d.length / n; b++) {
    line(p, xs, Array.from(d.subarray(b * n, (b + 1) * n)), PALETTE[(b - 1) % PALETTE.length]);
  }
}

function guard(fn) {
  return () => {
    try {
      fn();
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e.message || e);
    }
  };
}

await init();
const views = [
  [drawCurve, ["c-seed", "c-edge", "c-L", "c-scheme", "c-boundary", "c-policy", "c-range"]],
  [drawMae, ["m-seed", "m-scheme", "m-n"]],
  [drawBasis, ["b-K", "b-p"]],
];
for (const [fn, ids] of views) {
  const run = guard(fn);
  ids.forEach((id) => $(id).addEventListener("input", run));
  run();
}
window.addEventListener("resize", () => views.forEach(([fn]) => guard(fn)()));
