/** Browser bootstrap: mount the annotation app on #app.
 *
 * The session id comes from the query string (?session=...); the bearer
 * token is held in session storage after first entry.
 */

import { AnnotationApp } from './app.js'

const root = document.getElementById('app')
if (!root) {
  throw new Error('missing #app mount point')
}
const sessionId = new URLSearchParams(window.location.search).get('session')
if (!sessionId) {
  root.textContent = 'No session selected. Open this page as /ui/?session=<session-id>.'
} else {
  const app = new AnnotationApp(root, sessionId, {
    doc: document,
    fetchFn: (input, init) => window.fetch(input, init),
    baseUrl: '',
    storage: window.sessionStorage,
  })
  void app.start()
}
