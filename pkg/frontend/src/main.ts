import { ApiClient } from './api.js';
import { KioskApp } from './app.js';

const root = document.getElementById('app');
if (root) {
  const app = new KioskApp(root, new ApiClient(''));
  void app.start();
}
