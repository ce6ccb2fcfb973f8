import init, {
  presetSlice, edgeMap, segments, alignmentCurve, spacingCurve, nextAngle,
} from "./pkg/edgeview_wasm.js";

const N = 96;
const SCALE = 4;
const sliceCanvas = document.getElementById("slice");
const plotCanvas = document.getElementById("plot");
const $ = (id) => document.getElementById(id);

let slice = new Float64Array(N * N);
let measured = [0, 60, 120];
let chosen = null;

function status(msg) {
  $("status").textContent = msg || "";
}

function drawSlice(edges, segs) {
  const ctx = sliceCanvas.getContext("2d");
  const img = ctx.createImageData(N, N);
  let max = 0;
  for (const v of slice) max = Math.max(max, v);
  // slice index is x * N + y; draw x down, y across
  for (let x = 0; x < N; x++) {
    for (let y = 0; y < N; y++) {
      const i = x * N + y;
      const g = max > 0 ? Math.round((255 * slice[i]) / max) : 0;
      const p = 4 * (x * N + y);
      const edge = edges && $("overlay").checked && edges[i];
      img.data[p] = edge ? 255 : g;
      img.data[p + 1] = edge ? 200 : g;
      img.data[p + 2] = edge ? 0 : g;
      img.data[p + 3] = 255;
    }
  }
  const tmp = document.createElement("canvas");
  tmp.width = N;
  tmp.height = N;
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, N * SCALE, N * SCALE);
  if (segs && $("overlay").checked) {
    ctx.strokeStyle = "#0af";
    ctx.lineWidth = 2;
    for (let k = 0; k < segs.length; k += 4) {
      ctx.beginPath();
      ctx.moveTo((segs[k + 1] + 0.5) * SCALE, (segs[k] + 0.5) * SCALE);
      ctx.lineTo((segs[k + 3] + 0.5) * SCALE, (segs[k + 2] + 0.5) * SCALE);
      ctx.stroke();
    }
  }
}

function drawPlot(f, h, total) {
  const ctx = plotCanvas.getContext("2d");
  const W = plotCanvas.width, H = plotCanvas.height, pad = 30;
  ctx.clearRect(0, 0, W, H);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 10, W - pad - 10, H - pad - 10);
  const sx = (a) => pad + ((W - pad - 10) * a) / 180;
  const top = Math.max(1, ...total);
  const sy = (v) => H - pad - ((H - pad - 20) * v) / top;
  ctx.fillStyle = "#333";
  for (const a of [0, 45, 90, 135, 180]) ctx.fillText(String(a), sx(a) - 8, H - 12);
  ctx.fillText(top.toFixed(1), 2, sy(top) + 4);
  ctx.fillText("0", 18, sy(0) + 4);
  ctx.strokeStyle = "#555";
  for (const a of measured) {
    ctx.beginPath();
    ctx.moveTo(sx(a), sy(0));
    ctx.lineTo(sx(a), sy(top));
    ctx.stroke();
  }
  const line = (ys, color) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ys.forEach((v, a) => (a ? ctx.lineTo(sx(a), sy(v)) : ctx.moveTo(sx(a), sy(v))));
    ctx.stroke();
  };
  line(f, "#1f77b4");
  line(h, "#2ca02c");
  line(total, "#d62728");
  if (chosen !== null) {
    ctx.fillStyle = "#d62728";
    ctx.beginPath();
    ctx.arc(sx(chosen), sy(total[chosen]), 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function refresh() {
  try {
    status("");
    const edges = edgeMap(slice, N);
    const segs = segments(slice, N);
    drawSlice(edges, segs);
    const f = alignmentCurve(slice, N);
    const alpha = Number($("alpha").value);
    const gamma = Number($("gamma").value);
    const h = measured.length ? spacingCurve(new Float64Array(measured), alpha) : new Float64Array(180).fill(1);
    const total = Array.from(f, (v, a) => (measured.includes(a) ? 0 : v + gamma * h[a]));
    drawPlot(f, h, total);
    $("angles").textContent = "Measured: " + [...measured].sort((a, b) => a - b).join(", ");
  } catch (e) {
    status(e.message || String(e));
  }
}

function paint(ev) {
  const r = sliceCanvas.getBoundingClientRect();
  const y = Math.floor((ev.clientX - r.left) / SCALE);
  const x = Math.floor((ev.clientY - r.top) / SCALE);
  for (let dx = -2; dx <= 2; dx++) {
    for (let dy = -2; dy <= 2; dy++) {
      const u = x + dx, v = y + dy;
      if (u >= 0 && v >= 0 && u < N && v < N) slice[u * N + v] = 1;
    }
  }
  drawSlice(null, null);
}

let painting = false;
sliceCanvas.addEventListener("mousedown", (ev) => { painting = true; paint(ev); });
sliceCanvas.addEventListener("mousemove", (ev) => painting && paint(ev));
window.addEventListener("mouseup", () => { if (painting) { painting = false; chosen = null; refresh(); } });

plotCanvas.addEventListener("click", (ev) => {
  const r = plotCanvas.getBoundingClientRect();
  const a = Math.round((180 * (ev.clientX - r.left - 30)) / (plotCanvas.width - 40));
  if (a < 0 || a >= 180) return;
  measured = measured.includes(a) ? measured.filter((m) => m !== a) : [...measured, a];
  chosen = null;
  refresh();
});

$("next").addEventListener("click", () => {
  try {
    const out = nextAngle(slice, N, new Float64Array(measured), Number($("gamma").value), Number($("alpha").value));
    chosen = out[out.length - 1];
    measured = [...measured, chosen];
    refresh();
  } catch (e) {
    status(e.message || String(e));
  }
});
$("reset").addEventListener("click", () => { measured = [0, 60, 120]; chosen = null; refresh(); });
$("load").addEventListener("click", () => { slice = presetSlice($("preset").value, N); chosen = null; refresh(); });
$("clear").addEventListener("click", () => { slice = new Float64Array(N * N); chosen = null; refresh(); });
for (const id of ["gamma", "alpha", "overlay"]) $(id).addEventListener("change", refresh);

await init();
slice = presetSlice("blocks", N);
refresh();
