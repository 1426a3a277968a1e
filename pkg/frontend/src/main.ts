import { TeleopUi } from "./ui.js";

window.addEventListener("DOMContentLoaded", () => {
  new TeleopUi();
});
