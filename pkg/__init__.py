# rr-identity-lab package
