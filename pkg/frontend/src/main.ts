import { App } from "./app.js";
import { HttpApi } from "./api.js";

const mount = document.getElementById("app");
if (mount) {
  const app = new App(mount, new HttpApi(""));
  void app.start();
}
