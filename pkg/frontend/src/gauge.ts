// Switch-probability gauge; display-only, driven by server prediction pushes.

export class Gauge {
  private fill: HTMLElement;
  private label: HTMLElement;
  private root: HTMLElement;

  constructor(root: HTMLElement) {
    this.root = root;
    this.root.classList.add("gauge");
    this.fill = document.createElement("div");
    this.fill.className = "gauge-fill";
    this.label = document.createElement("span");
    this.label.className = "gauge-label";
    this.root.append(this.fill, this.label);
    this.hide();
  }

  show(p: number): void {
    const pct = Math.round(Math.min(1, Math.max(0, p)) * 100);
    this.root.style.visibility = "visible";
    this.fill.style.width = `${pct}%`;
    this.fill.classList.toggle("hot", pct >= 50);
    this.label.textContent = `switch ${pct}%`;
  }

  hide(): void {
    this.root.style.visibility = "hidden";
  }
}
