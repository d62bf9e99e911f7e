// Entry point for the served bundle; tests import startApp directly.
import { startApp } from './main.js';

function boot(): void {
  const root = document.getElementById('app');
  if (root) startApp(root);
}

if (document.readyState === 'loading') {
  document.addEventListener('DOMContentLoaded', boot);
} else {
  boot();
}
