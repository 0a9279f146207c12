import { App } from "./app.js";

const app = new App(document);
document.addEventListener("DOMContentLoaded", () => app.mount());
if (document.readyState !== "loading") app.mount();
