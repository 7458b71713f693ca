# Virtual Inertia Control Package
