import init, { scoreMethods, auditRanges, distances } from "./pkg/cfeval_demo_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const vec = (id) => $(id).value.split(",").map((s) => Number(s.trim()));

function show(target, f) {
  try {
    $(target).textContent = f();
  } catch (e) {
    $(target).textContent = `error: ${e}`;
  }
}

await init();

$("score").onclick = () => show("table", () => scoreMethods(num("seed"), num("n"), num("lo"), num("hi")));
$("audit").onclick = () => show("table", () => auditRanges(num("seed"), num("n")));
$("dist").onclick = () =>
  show("dist-out", () => {
    const [l1, l2, en] = distances(new Float64Array(vec("x")), new Float64Array(vec("c")));
    return `L1 ${l1}\nL2 ${l2}\nEN ${en}`;
  });
