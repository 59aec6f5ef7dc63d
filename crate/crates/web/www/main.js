import init, { grid, threeLevelSpectrum, fourLevelSpectrum, planTable } from "./pkg/holeburn_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function plot(canvas, x, y, xlabel) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  let lo = Math.min(...y), hi = Math.max(...y);
  if (hi === lo) { hi += 1; lo -= 1; }
  const sx = (v) => pad + (v - x[0]) / (x[x.length - 1] - x[0]) * (w - 2 * pad);
  const sy = (v) => h - pad - (v - lo) / (hi - lo) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText(x[0].toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x[x.length - 1].toPrecision(3), w - pad - 30, h - pad + 14);
  ctx.fillText(xlabel, w / 2 - 40, h - 8);
  ctx.strokeStyle = "#1565c0";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  x.forEach((v, i) => (i ? ctx.lineTo(sx(v), sy(y[i])) : ctx.moveTo(sx(v), sy(y[i]))));
  ctx.stroke();
}

function guarded(msg, f) {
  try {
    f();
    $(msg).textContent = "";
  } catch (e) {
    $(msg).textContent = e.message ?? String(e);
    $(msg).className = "err";
  }
}

function three() {
  guarded("t-msg", () => {
    const [n1, n2, n3] = $("t-deg").value.split(",").map((s) => parseInt(s, 10));
    const span = num("t-span");
    const x = grid(-span, span, 241);
    const y = threeLevelSpectrum(n1, n2, n3, num("t-split"), num("t-hom"), 0.94, num("t-inh"),
      num("t-pump"), num("t-probe"), x);
    plot($("t-plot"), x, y, "probe detuning (MHz)");
  });
}

function four() {
  guarded("f-msg", () => {
    const x = grid(-15000, 15000, 241);
    const y = fourLevelSpectrum(num("f-ge"), num("f-gh"), num("f-b"), num("f-hom"), 0.94, 39600,
      num("f-pump"), num("f-probe"), x);
    plot($("f-plot"), Array.from(x, (v) => v / 1000), y, "probe detuning (GHz)");
  });
}

function plan() {
  guarded("p-msg", () => {
    const lw = new Float64Array($("p-lw").value.split(",").map(parseFloat));
    const rows = planTable(num("p-tau"), num("p-eta"), lw, num("p-v"));
    let html = "<tr><th>linewidth MHz</th><th>V without cavity</th><th>F<sub>P</sub></th><th>Q</th><th>lifetime ns</th></tr>";
    for (let i = 0; i < rows.length; i += 5) {
      html += `<tr><td>${rows[i]}</td><td>${rows[i + 1].toFixed(4)}</td><td>${rows[i + 2].toFixed(1)}</td>` +
        `<td>${rows[i + 3].toFixed(0)}</td><td>${rows[i + 4].toFixed(2)}</td></tr>`;
    }
    $("p-table").innerHTML = html;
  });
}

await init();
for (const [section, run] of [["three", three], ["four", four], ["plan", plan]]) {
  $(section).addEventListener("change", run);
  run();
}
