# API Services
