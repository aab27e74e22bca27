import init, { equilibrium_curves, belief_paths, residual_grid } from "./pkg/ghostgame_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const params = () => [num("lambda_hi"), num("lambda_lo"), num("c"), num("r")];
let thresholds = null;

function frame(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(40, 10, w - 50, h - 40);
}

function polyline(ctx, xs, ys, sx, sy, color) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(ys[i])) : ctx.moveTo(sx(x), sy(ys[i]))));
  ctx.stroke();
}

function vline(ctx, x, h, color) {
  ctx.strokeStyle = color;
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(x, 10);
  ctx.lineTo(x, h - 30);
  ctx.stroke();
  ctx.setLineDash([]);
}

function drawCurves(res) {
  const cv = $("curves"), ctx = cv.getContext("2d"), w = cv.width, h = cv.height;
  frame(ctx, w, h);
  const top = Math.max(...res.v, ...res.u) * 1.05 || 1;
  const sx = (p) => 40 + p * (w - 50);
  const sy = (y) => h - 30 - (y / top) * (h - 40);
  polyline(ctx, res.p, res.v, sx, sy, "#1f77b4");
  polyline(ctx, res.p, res.u, sx, sy, "#d62728");
  vline(ctx, sx(res.b1), h, "#555");
  vline(ctx, sx(res.b2), h, "#555");
  ctx.fillStyle = "#222";
  ctx.fillText("v (controller)", 50, 24);
  ctx.fillStyle = "#d62728";
  ctx.fillText("u (stopper)", 50, 38);
  ctx.fillStyle = "#222";
  ctx.fillText("0", 36, h - 16);
  ctx.fillText("1", w - 14, h - 16);
  ctx.fillText(top.toFixed(2), 4, 18);
}

function drawResiduals() {
  const n = 120;
  const grid = residual_grid(...params(), n);
  const cv = $("residuals"), ctx = cv.getContext("2d"), cell = cv.width / n;
  ctx.clearRect(0, 0, cv.width, cv.height);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const f = grid[i * n + j], g = grid[n * n + i * n + j];
      if (Number.isNaN(f)) continue;
      ctx.fillStyle = f > 0 ? "#f4a6a6" : "#a6c8f4";
      const right = j + 1 < n ? grid[n * n + i * n + j + 1] : g;
      const below = i + 1 < n ? grid[n * n + (i + 1) * n + j] : g;
      if (Math.sign(g) !== Math.sign(right) || Math.sign(g) !== Math.sign(below)) ctx.fillStyle = "#000";
      ctx.fillRect(j * cell, i * cell, cell + 0.5, cell + 0.5);
    }
  }
  if (thresholds) {
    ctx.strokeStyle = "#0a0";
    ctx.beginPath();
    ctx.arc(thresholds.b2 * cv.width, thresholds.b1 * cv.height, 6, 0, 2 * Math.PI);
    ctx.stroke();
  }
}

function solve() {
  const res = JSON.parse(equilibrium_curves(...params(), 801));
  if (res.error) {
    thresholds = null;
    $("summary").innerHTML = `<span class="err">${res.error}</span>`;
    $("curves").getContext("2d").clearRect(0, 0, 900, 320);
  } else {
    thresholds = { b1: res.b1, b2: res.b2 };
    $("summary").textContent =
      `b1* = ${res.b1.toFixed(6)}  b2* = ${res.b2.toFixed(6)}  certified = ${res.certified}` +
      (res.conditions_ok ? "" : "  (parameter conditions fail)");
    drawCurves(res);
  }
  drawResiduals();
}

function simulate() {
  if (!thresholds) return;
  const out = JSON.parse(
    belief_paths(...params(), thresholds.b1, thresholds.b2, num("p0"), num("horizon"), 0.01,
      num("n_paths"), BigInt(num("seed")), $("shirk").checked),
  );
  if (out.error) {
    $("paths_summary").innerHTML = `<span class="err">${out.error}</span>`;
    return;
  }
  const cv = $("paths"), ctx = cv.getContext("2d"), w = cv.width, h = cv.height;
  frame(ctx, w, h);
  const T = num("horizon");
  const sx = (t) => 40 + (t / T) * (w - 50);
  const sy = (p) => h - 30 - p * (h - 40);
  ctx.globalAlpha = 0.7;
  for (const path of out.paths) polyline(ctx, path.t, path.p, sx, sy, path.theta ? "#2ca02c" : "#9467bd");
  ctx.globalAlpha = 1;
  for (const b of [thresholds.b1, thresholds.b2]) {
    ctx.strokeStyle = "#555";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(40, sy(b));
    ctx.lineTo(w - 10, sy(b));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  const stopped = out.paths.filter((p) => p.stopped_at !== null).length;
  const mean = (k) => out.paths.reduce((s, p) => s + p[k], 0) / out.paths.length;
  $("paths_summary").textContent =
    `stopped ${stopped}/${out.paths.length}  mean stopper payoff ${mean("stopper_payoff").toFixed(3)}` +
    `  mean controller payoff ${mean("controller_payoff").toFixed(3)}  (green: active, purple: passive)`;
}

await init();
$("solve").addEventListener("click", () => { solve(); simulate(); });
$("simulate").addEventListener("click", simulate);
solve();
simulate();
