/** DOM wiring for the explorer. State transitions live in state.ts; this
 * file only reads inputs and paints responses. */

import { HttpApi } from "./api.js";
import {
  DEBOUNCE_MS,
  ExplorerController,
  SLIDER_BOUND,
  type ExplorerView,
} from "./state.js";

const api = new HttpApi("");
const controller = new ExplorerController(api, 8, DEBOUNCE_MS);

function el<T extends HTMLElement>(sel: string): T {
  const node = document.querySelector(sel);
  if (!node) throw new Error(`missing element ${sel}`);
  return node as T;
}

const searchBox = el<HTMLInputElement>("#search");
const charList = el<HTMLDivElement>("#char-list");
const sliderPanel = el<HTMLDivElement>("#sliders");
const glyphImg = el<HTMLImageElement>("#glyph");
const neighborPanel = el<HTMLDivElement>("#neighbors");
const errorBanner = el<HTMLDivElement>("#error");
const ssaButton = el<HTMLButtonElement>("#ssa-button");
const gammaInput = el<HTMLInputElement>("#gamma");
const ssaPanel = el<HTMLDivElement>("#ssa-panel");
const stripPanel = el<HTMLDivElement>("#strip");
const selectedLabel = el<HTMLSpanElement>("#selected-char");

let objectUrls: string[] = [];

function blobUrl(blob: Blob): string {
  const url = URL.createObjectURL(blob);
  objectUrls.push(url);
  return url;
}

function releaseUrls(): void {
  for (const u of objectUrls) URL.revokeObjectURL(u);
  objectUrls = [];
}

function renderSliders(view: ExplorerView): void {
  sliderPanel.replaceChildren();
  view.z.forEach((value, dim) => {
    const row = document.createElement("div");
    row.className = "slider-row";

    const label = document.createElement("label");
    label.textContent = `z${dim}`;

    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = String(-SLIDER_BOUND);
    slider.max = String(SLIDER_BOUND);
    slider.step = "0.01";
    slider.value = String(value);
    slider.addEventListener("input", () => {
      controller.dragDimension(dim, Number(slider.value));
      numeric.value = slider.value;
    });

    const numeric = document.createElement("input");
    numeric.type = "number";
    numeric.step = "0.01";
    numeric.value = value.toFixed(3);
    numeric.addEventListener("change", () => {
      controller.dragDimension(dim, Number(numeric.value));
      slider.value = numeric.value;
    });

    const reset = document.createElement("button");
    reset.textContent = "mu";
    reset.title = "return to the encoded mean";
    reset.addEventListener("click", () => {
      const mu = view.mu[dim] as number;
      controller.dragDimension(dim, mu);
      slider.value = String(mu);
      numeric.value = mu.toFixed(3);
    });

    const traverse = document.createElement("button");
    traverse.textContent = "strip";
    traverse.title = "decode offsets -2..+2 on this dimension";
    traverse.addEventListener("click", () => void controller.showTraversal(dim));

    row.append(label, slider, numeric, reset, traverse);
    sliderPanel.append(row);
  });
}

function render(view: ExplorerView): void {
  releaseUrls();
  errorBanner.textContent = view.error ?? "";
  errorBanner.hidden = view.error === null;
  selectedLabel.textContent = view.char ?? "none";

  if (view.glyph) glyphImg.src = blobUrl(view.glyph);

  if (sliderPanel.childElementCount !== view.z.length) {
    renderSliders(view);
  }

  neighborPanel.replaceChildren(
    ...view.neighbors.map((n) => {
      const b = document.createElement("button");
      b.className = "neighbor";
      b.textContent = `${n.char} (${n.distance.toFixed(2)})`;
      b.addEventListener("click", () => void selectChar(n.char));
      return b;
    }),
  );

  ssaPanel.replaceChildren();
  if (view.ssa) {
    const caption = document.createElement("div");
    caption.textContent =
      `dim ${view.ssa.dim}, u = ${view.ssa.u.toFixed(3)}`;
    const before = document.createElement("img");
    before.src = blobUrl(view.ssa.before);
    const after = document.createElement("img");
    after.src = blobUrl(view.ssa.after);
    ssaPanel.append(caption, before, after);
  }

  stripPanel.replaceChildren();
  if (view.strip) {
    const caption = document.createElement("div");
    caption.textContent = `dimension ${view.stripDim}, offsets -2..+2`;
    stripPanel.append(caption);
    for (const tile of view.strip) {
      const img = document.createElement("img");
      img.src = blobUrl(tile);
      stripPanel.append(img);
    }
  }
}

async function selectChar(ch: string): Promise<void> {
  window.location.hash = encodeURIComponent(ch);
  sliderPanel.replaceChildren(); // force slider rebuild at the new mu
  await controller.selectCharacter(ch);
}

async function refreshCharList(): Promise<void> {
  const entries = await api.chars(searchBox.value, 80);
  charList.replaceChildren(
    ...entries.map((e) => {
      const b = document.createElement("button");
      b.className = "char-cell";
      b.textContent = e.char;
      b.addEventListener("click", () => void selectChar(e.char));
      return b;
    }),
  );
}

controller.onChange(render);
searchBox.addEventListener("input", () => void refreshCharList());
ssaButton.addEventListener("click", () =>
  void controller.randomizeSsa(Number(gammaInput.value)));

void refreshCharList();
const fromHash = decodeURIComponent(window.location.hash.slice(1));
if (fromHash) void selectChar(fromHash);
