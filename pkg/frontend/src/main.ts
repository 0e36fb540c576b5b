import { mount } from "./app.js";

const root = document.getElementById("root");
if (root) {
  mount(root);
}
